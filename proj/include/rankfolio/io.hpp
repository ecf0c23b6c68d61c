#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "rankfolio/dynamics.hpp"
#include "rankfolio/model.hpp"

namespace rankfolio::io {

inline constexpr int kSchemaVersion = 1;

std::uint64_t fnv1a64(std::string_view s);
std::string format_double(double v);  // shortest exact round-trip (17 significant digits)

// Canonical parameter strings; fingerprints hash their concatenation.
std::string describe(const FirstOrderParams& model);
std::string describe(const Preferences& prefs);
std::string describe(const ConstraintSpec& constraint);
std::string describe(const SimConfig& config);

std::string fingerprint_hex(const FirstOrderParams& model, const Preferences& prefs,
                            const ConstraintSpec& constraint, const SimConfig& config);

const char* scheme_name(Scheme scheme);
Scheme scheme_from_name(const std::string& name);
const char* constraint_name(ConstraintKind kind);

// Experiment configuration, JSON on disk. Model keys are flat: d, mu_tilde,
// sigma_tilde (row-major), r, gamma, beta, T, constraint {kind, n, N};
// optional sim {paths, steps, t0, t1, seed, scheme, threads} and
// value {w0, x0} blocks.
struct AppConfig {
    FirstOrderParams model;
    Preferences prefs;
    ConstraintSpec constraint;
    SimConfig sim;
    double w0 = 1.0;
    Vector x0;  // defaults to (d, d-1, ..., 1) when absent
    std::string out_dir;
};

AppConfig load_config(const std::string& path);        // throws std::runtime_error, field-level message
AppConfig parse_config(const std::string& json_text);  // same, from a string

// PathBundle CSV: header path_id,step,t,X_1..X_d,Y_1..Y_d,Phi_1..Phi_d,V;
// absent columns are written as nan. Sidecar JSON carries the seed, scheme,
// step size, model hash and schema version.
void write_bundle_csv(const PathBundle& bundle, const std::string& csv_path,
                      const std::string& meta_path, const std::string& model_hash);
PathBundle read_bundle_csv(const std::string& csv_path);

}  // namespace rankfolio::io
