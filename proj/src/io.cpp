#include "rankfolio/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace rankfolio::io {

using nlohmann::json;

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string describe(const FirstOrderParams& model) {
    std::string s = "model{d=" + std::to_string(model.d) + ",mu=";
    for (double v : model.mu_tilde) s += format_double(v) + ";";
    s += ",sigma=";
    for (double v : model.sigma_tilde.data()) s += format_double(v) + ";";
    s += ",r=" + format_double(model.r) + "}";
    return s;
}

std::string describe(const Preferences& prefs) {
    return "prefs{gamma=" + format_double(prefs.gamma) + ",beta=" + format_double(prefs.beta) +
           ",T=" + format_double(prefs.horizon) + "}";
}

std::string describe(const ConstraintSpec& constraint) {
    return std::string("constraint{") + constraint_name(constraint.kind) + "," +
           std::to_string(constraint.lo) + "," + std::to_string(constraint.hi) + "}";
}

std::string describe(const SimConfig& config) {
    return "sim{paths=" + std::to_string(config.n_paths) + ",steps=" +
           std::to_string(config.n_steps) + ",t0=" + format_double(config.t0) +
           ",t1=" + format_double(config.t1) + ",seed=" + std::to_string(config.master_seed) +
           ",scheme=" + scheme_name(config.scheme) + "}";
}

std::string fingerprint_hex(const FirstOrderParams& model, const Preferences& prefs,
                            const ConstraintSpec& constraint, const SimConfig& config) {
    const std::uint64_t h =
        fnv1a64(describe(model) + describe(prefs) + describe(constraint) + describe(config));
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

const char* scheme_name(Scheme scheme) {
    return scheme == Scheme::NamedLogEuler ? "named_log_euler" : "ranked_projected_euler";
}

Scheme scheme_from_name(const std::string& name) {
    if (name == "named_log_euler") return Scheme::NamedLogEuler;
    if (name == "ranked_projected_euler") return Scheme::RankedProjectedEuler;
    throw std::runtime_error("config: unknown scheme '" + name + "'");
}

const char* constraint_name(ConstraintKind kind) {
    switch (kind) {
        case ConstraintKind::Unconstrained: return "unconstrained";
        case ConstraintKind::OpenMarket: return "open_market";
        case ConstraintKind::FullyInvestedOpen: return "fully_invested_open";
    }
    return "unconstrained";
}

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
    throw std::runtime_error("config: field '" + field + "': " + what);
}

double get_num(const json& j, const std::string& field) {
    if (!j.contains(field)) fail(field, "missing");
    if (!j[field].is_number()) fail(field, "expected a number");
    return j[field].get<double>();
}

double get_num_or(const json& j, const std::string& field, double fallback) {
    if (!j.contains(field)) return fallback;
    if (!j[field].is_number()) fail(field, "expected a number");
    return j[field].get<double>();
}

}  // namespace

AppConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("config: invalid JSON: ") + e.what());
    }
    AppConfig cfg;

    const int d = static_cast<int>(get_num(j, "d"));
    if (d < 1) fail("d", "must be >= 1");
    cfg.model.d = d;

    if (!j.contains("mu_tilde") || !j["mu_tilde"].is_array()) fail("mu_tilde", "expected an array");
    cfg.model.mu_tilde = j["mu_tilde"].get<Vector>();
    if (static_cast<int>(cfg.model.mu_tilde.size()) != d) fail("mu_tilde", "length must equal d");

    if (!j.contains("sigma_tilde") || !j["sigma_tilde"].is_array())
        fail("sigma_tilde", "expected a row-major array of d*d numbers");
    const Vector sig = j["sigma_tilde"].get<Vector>();
    if (static_cast<int>(sig.size()) != d * d) fail("sigma_tilde", "length must equal d*d");
    cfg.model.sigma_tilde = Matrix(d, d);
    cfg.model.sigma_tilde.data() = sig;

    cfg.model.r = get_num(j, "r");
    cfg.prefs.gamma = get_num(j, "gamma");
    cfg.prefs.beta = get_num(j, "beta");
    cfg.prefs.horizon = get_num(j, "T");
    try {
        cfg.prefs.require_valid();
    } catch (const std::exception& e) {
        fail("gamma/beta/T", e.what());
    }

    cfg.constraint = ConstraintSpec::unconstrained();
    if (j.contains("constraint")) {
        const json& c = j["constraint"];
        if (!c.is_object() || !c.contains("kind")) fail("constraint", "expected {kind, n, N}");
        const std::string kind = c["kind"].get<std::string>();
        const int n = static_cast<int>(get_num_or(c, "n", 1));
        const int big_n = static_cast<int>(get_num_or(c, "N", d));
        if (kind == "unconstrained")
            cfg.constraint = ConstraintSpec::unconstrained();
        else if (kind == "open_market")
            cfg.constraint = ConstraintSpec::open_market(n, big_n);
        else if (kind == "fully_invested_open")
            cfg.constraint = ConstraintSpec::fully_invested_open(n, big_n);
        else
            fail("constraint.kind", "must be unconstrained | open_market | fully_invested_open");
        try {
            cfg.constraint.require_valid(d);
        } catch (const std::exception& e) {
            fail("constraint", e.what());
        }
    }

    cfg.sim.t1 = cfg.prefs.horizon;
    if (j.contains("sim")) {
        const json& s = j["sim"];
        cfg.sim.n_paths = static_cast<std::int64_t>(get_num_or(s, "paths", cfg.sim.n_paths));
        cfg.sim.n_steps = static_cast<int>(get_num_or(s, "steps", cfg.sim.n_steps));
        cfg.sim.t0 = get_num_or(s, "t0", 0.0);
        cfg.sim.t1 = get_num_or(s, "t1", cfg.prefs.horizon);
        cfg.sim.master_seed = static_cast<std::uint64_t>(get_num_or(s, "seed", 42));
        cfg.sim.threads = static_cast<int>(get_num_or(s, "threads", 0));
        if (s.contains("scheme")) cfg.sim.scheme = scheme_from_name(s["scheme"].get<std::string>());
        try {
            cfg.sim.require_valid();
        } catch (const std::exception& e) {
            fail("sim", e.what());
        }
    }

    cfg.x0.resize(d);
    for (int i = 0; i < d; ++i) cfg.x0[i] = static_cast<double>(d - i);
    if (j.contains("value")) {
        const json& v = j["value"];
        cfg.w0 = get_num_or(v, "w0", 1.0);
        if (!(cfg.w0 > 0.0)) fail("value.w0", "must be positive");
        if (v.contains("x0")) {
            cfg.x0 = v["x0"].get<Vector>();
            if (static_cast<int>(cfg.x0.size()) != d) fail("value.x0", "length must equal d");
            for (double xv : cfg.x0)
                if (!(xv > 0.0)) fail("value.x0", "entries must be strictly positive");
        }
    }
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
    return cfg;
}

AppConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void write_bundle_csv(const PathBundle& bundle, const std::string& csv_path,
                      const std::string& meta_path, const std::string& model_hash) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot open '" + csv_path + "' for writing");
    const int d = bundle.d;
    out << "path_id,step,t";
    for (int k = 1; k <= d; ++k) out << ",X_" << k;
    for (int k = 1; k <= d; ++k) out << ",Y_" << k;
    for (int k = 1; k <= d; ++k) out << ",Phi_" << k;
    out << ",V\n";
    for (std::int64_t p = 0; p < bundle.n_paths; ++p) {
        for (int s = 0; s <= bundle.n_steps; ++s) {
            out << p << ',' << s << ',' << format_double(bundle.times[s]);
            const std::size_t base = bundle.node(p, s);
            for (int k = 0; k < d; ++k)
                out << ',' << (bundle.has_X() ? format_double(bundle.X[base + k]) : "nan");
            for (int k = 0; k < d; ++k) out << ',' << format_double(bundle.Y[base + k]);
            for (int k = 0; k < d; ++k)
                out << ',' << (bundle.has_Phi() ? format_double(bundle.Phi[base + k]) : "nan");
            out << ','
                << (bundle.has_V()
                        ? format_double(bundle.V[static_cast<std::size_t>(p) * (bundle.n_steps + 1) + s])
                        : "nan")
                << '\n';
        }
    }
    if (!out) throw std::runtime_error("write failed for '" + csv_path + "'");

    nlohmann::ordered_json meta;
    meta["schema_version"] = kSchemaVersion;
    meta["d"] = d;
    meta["n_paths"] = bundle.n_paths;
    meta["n_steps"] = bundle.n_steps;
    meta["t0"] = bundle.times.front();
    meta["t1"] = bundle.times.back();
    meta["h"] = (bundle.times.back() - bundle.times.front()) / bundle.n_steps;
    meta["seed"] = bundle.master_seed;
    meta["seed_rule"] = "xoshiro256pp(splitmix64(master_seed xor mix(path_index)))";
    meta["scheme"] = scheme_name(bundle.scheme);
    meta["model_hash"] = model_hash;
    std::ofstream mout(meta_path);
    if (!mout) throw std::runtime_error("cannot open '" + meta_path + "' for writing");
    mout << meta.dump(2) << '\n';
}

PathBundle read_bundle_csv(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("cannot open '" + csv_path + "'");
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("empty bundle csv");

    int d = 0;
    {
        std::stringstream hs(header);
        std::string col;
        while (std::getline(hs, col, ','))
            if (col.rfind("X_", 0) == 0) ++d;
    }
    if (d < 1) throw std::runtime_error("bundle csv: no X_ columns in header");

    struct Row {
        std::int64_t p;
        int s;
        double t;
        std::vector<double> vals;
    };
    std::vector<Row> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        Row r;
        std::getline(ls, cell, ',');
        r.p = std::stoll(cell);
        std::getline(ls, cell, ',');
        r.s = std::stoi(cell);
        std::getline(ls, cell, ',');
        r.t = std::stod(cell);
        while (std::getline(ls, cell, ',')) r.vals.push_back(std::stod(cell));
        if (static_cast<int>(r.vals.size()) != 3 * d + 1)
            throw std::runtime_error("bundle csv: wrong column count on a data row");
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw std::runtime_error("bundle csv: no data rows");

    std::int64_t n_paths = 0;
    int n_steps = 0;
    for (const auto& r : rows) {
        n_paths = std::max(n_paths, r.p + 1);
        n_steps = std::max(n_steps, r.s);
    }
    PathBundle b;
    b.d = d;
    b.n_paths = n_paths;
    b.n_steps = n_steps;
    b.times.assign(n_steps + 1, 0.0);
    const std::size_t nodes = static_cast<std::size_t>(n_paths) * (n_steps + 1) * d;
    b.X.assign(nodes, std::nan(""));
    b.Y.assign(nodes, std::nan(""));
    b.Phi.assign(nodes, std::nan(""));
    b.V.assign(static_cast<std::size_t>(n_paths) * (n_steps + 1), std::nan(""));
    b.ok.assign(n_paths, 1);
    for (const auto& r : rows) {
        b.times[r.s] = r.t;
        const std::size_t base = b.node(r.p, r.s);
        for (int k = 0; k < d; ++k) {
            b.X[base + k] = r.vals[k];
            b.Y[base + k] = r.vals[d + k];
            b.Phi[base + k] = r.vals[2 * d + k];
        }
        b.V[static_cast<std::size_t>(r.p) * (n_steps + 1) + r.s] = r.vals[3 * d];
    }
    auto all_nan = [](const std::vector<double>& v) {
        for (double x : v)
            if (!std::isnan(x)) return false;
        return true;
    };
    if (all_nan(b.X)) b.X.clear();
    if (all_nan(b.Phi)) b.Phi.clear();
    if (all_nan(b.V)) b.V.clear();
    return b;
}

}  // namespace rankfolio::io
