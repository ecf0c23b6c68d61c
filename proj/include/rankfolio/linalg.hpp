#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace rankfolio {

using Vector = std::vector<double>;

// Dense row-major matrix, sized once at construction. Small d only.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n);

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool operator==(const Matrix& o) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Vector matvec(const Matrix& a, std::span<const double> x);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
double dot(std::span<const double> a, std::span<const double> b);
// x'Ax
double quadratic_form(const Matrix& a, std::span<const double> x);
bool is_symmetric(const Matrix& a, double tol = 1e-12);

// Lower-triangular Cholesky factor of an SPD matrix; nullopt when the
// factorization breaks down (matrix not positive definite).
std::optional<Matrix> cholesky(const Matrix& a);

// Solve A x = b given the Cholesky factor L of A.
Vector cholesky_solve(const Matrix& chol_l, std::span<const double> b);

// Convenience: SPD solve; throws std::domain_error if A is not SPD.
Vector spd_solve(const Matrix& a, std::span<const double> b);

// All eigenvalues of a symmetric matrix (cyclic Jacobi), ascending.
Vector symmetric_eigenvalues(Matrix a, int max_sweeps = 64);

}  // namespace rankfolio
