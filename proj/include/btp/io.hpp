#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"

#include "btp/errors.hpp"
#include "btp/estimates.hpp"
#include "btp/lattice.hpp"
#include "btp/montecarlo.hpp"
#include "btp/quadrature.hpp"
#include "btp/solver.hpp"

namespace btp {

inline constexpr const char* kToolVersion = "0.1.0";

/// One run of the command-line tool. Every field has a default, so a config
/// document only needs the keys it changes.
struct ExperimentConfig {
    std::string command = "solve";
    int d = 1;
    double delta = 0.25;
    double l = 4.0;
    std::string boundary = "zero";
    double horizon = 1.0;
    int level = 8;  ///< time step 2^-level
    QuadratureSpec quadrature;
    std::string diffusion = "linear";
    double diffusion_param = 0.5;
    std::string initial = "constant";  ///< constant | gaussian | indicator | cosine
    double initial_value = 1.0;        ///< amplitude (constant value for "constant")
    double initial_width = 1.0;        ///< variance of the bump, or wavelength for "cosine"
    std::uint64_t seed = 1;
    std::size_t replicates = 1;
    std::string out = ".";

    // solve
    std::string solver = "picard";  ///< picard | euler | psdde | sdde
    int euler_level = 6;
    int reference_level = 14;
    std::vector<int> levels;
    double picard_tol = 1e-6;
    int picard_max_iter = 50;

    // kernel-table
    std::string kernel_kind = "btbm";
    std::vector<double> kernel_times{1.0};
    long kernel_radius = 8;

    // verify
    std::vector<std::string> checks;

    // holder
    std::string holder_axis = "time";
    double q = 1.0;

    bool operator==(const ExperimentConfig&) const = default;

    LatticeSpec lattice() const {
        if (boundary != "zero" && boundary != "periodic") throw ConfigError("boundary must be 'zero' or 'periodic'");
        try {
            return make_lattice(delta, d, l, boundary == "zero" ? Boundary::zero : Boundary::periodic);
        } catch (const DomainError& e) {
            throw ConfigError(e.what());
        }
    }
    TimeGrid time_grid() const { return TimeGrid::dyadic(horizon, level); }

    InitialFunction initial_function() const {
        const double c = initial_value, w = initial_width;
        if (initial == "constant") return [c](std::span<const double>) { return c; };
        if (initial == "gaussian")
            return [c, w](std::span<const double> x) {
                double r2 = 0.0;
                for (double v : x) r2 += v * v;
                return c * std::exp(-r2 / (2.0 * w));
            };
        if (initial == "cosine")
            return [c, w](std::span<const double> x) { return 1.0 + c * std::cos(2.0 * std::numbers::pi * x[0] / w); };
        throw ConfigError("initial kind '" + initial + "' has no function form");
    }

    InitialCondition initial_condition() const {
        if (initial == "constant") return InitialCondition::constant_value(initial_value);
        if (initial == "indicator") {
            LatticeField f = LatticeField::indicator(lattice());
            for (double& v : f.values) v *= initial_value;
            return InitialCondition::from_field(std::move(f));
        }
        return InitialCondition::from_field(LatticeField::from_function(lattice(), initial_function()));
    }
};

inline void to_json(nlohmann::json& j, const QuadratureSpec& q) {
    j = {{"node_count", q.node_count}, {"tail_cutoff", q.tail_cutoff}, {"rel_tol", q.rel_tol}, {"max_depth", q.max_depth}};
}

inline void from_json(const nlohmann::json& j, QuadratureSpec& q) {
    const QuadratureSpec def;
    q.node_count = j.value("node_count", def.node_count);
    q.tail_cutoff = j.value("tail_cutoff", def.tail_cutoff);
    q.rel_tol = j.value("rel_tol", def.rel_tol);
    q.max_depth = j.value("max_depth", def.max_depth);
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = {{"command", c.command},
         {"d", c.d},
         {"lattice", {{"delta", c.delta}, {"l", c.l}, {"boundary", c.boundary}}},
         {"time", {{"horizon", c.horizon}, {"level", c.level}}},
         {"quadrature", c.quadrature},
         {"diffusion", {{"label", c.diffusion}, {"param", c.diffusion_param}}},
         {"initial", {{"kind", c.initial}, {"value", c.initial_value}, {"width", c.initial_width}}},
         {"seed", c.seed},
         {"replicates", c.replicates},
         {"out", c.out},
         {"solve",
          {{"solver", c.solver},
           {"euler_level", c.euler_level},
           {"reference_level", c.reference_level},
           {"levels", c.levels},
           {"picard_tol", c.picard_tol},
           {"picard_max_iter", c.picard_max_iter}}},
         {"kernel", {{"kind", c.kernel_kind}, {"times", c.kernel_times}, {"radius", c.kernel_radius}}},
         {"checks", c.checks},
         {"holder", {{"axis", c.holder_axis}, {"q", c.q}}}};
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [k, v] : j.items()) {
        bool known = false;
        for (const char* key : keys) known = known || k == key;
        if (!known) throw ConfigError("unknown key '" + k + "' in " + where);
    }
}

}  // namespace detail

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    detail::reject_unknown(j, {"command", "d", "lattice", "time", "quadrature", "diffusion", "initial", "seed",
                               "replicates", "out", "solve", "kernel", "checks", "holder"},
                           "config");
    const ExperimentConfig def;
    const nlohmann::json empty = nlohmann::json::object();
    auto sub = [&](const char* k, std::initializer_list<const char*> keys) -> const nlohmann::json& {
        if (!j.contains(k)) return empty;
        detail::reject_unknown(j.at(k), keys, k);
        return j.at(k);
    };
    c.command = j.value("command", def.command);
    c.d = j.value("d", def.d);
    const auto& lat = sub("lattice", {"delta", "l", "boundary"});
    c.delta = lat.value("delta", def.delta);
    c.l = lat.value("l", def.l);
    c.boundary = lat.value("boundary", def.boundary);
    const auto& tm = sub("time", {"horizon", "level"});
    c.horizon = tm.value("horizon", def.horizon);
    c.level = tm.value("level", def.level);
    c.quadrature = j.contains("quadrature") ? j.at("quadrature").get<QuadratureSpec>() : def.quadrature;
    const auto& df = sub("diffusion", {"label", "param"});
    c.diffusion = df.value("label", def.diffusion);
    c.diffusion_param = df.value("param", def.diffusion_param);
    const auto& in = sub("initial", {"kind", "value", "width"});
    c.initial = in.value("kind", def.initial);
    c.initial_value = in.value("value", def.initial_value);
    c.initial_width = in.value("width", def.initial_width);
    c.seed = j.value("seed", def.seed);
    c.replicates = j.value("replicates", def.replicates);
    c.out = j.value("out", def.out);
    const auto& sv = sub("solve", {"solver", "euler_level", "reference_level", "levels", "picard_tol", "picard_max_iter"});
    c.solver = sv.value("solver", def.solver);
    c.euler_level = sv.value("euler_level", def.euler_level);
    c.reference_level = sv.value("reference_level", def.reference_level);
    c.levels = sv.value("levels", def.levels);
    c.picard_tol = sv.value("picard_tol", def.picard_tol);
    c.picard_max_iter = sv.value("picard_max_iter", def.picard_max_iter);
    const auto& kn = sub("kernel", {"kind", "times", "radius"});
    c.kernel_kind = kn.value("kind", def.kernel_kind);
    c.kernel_times = kn.value("times", def.kernel_times);
    c.kernel_radius = kn.value("radius", def.kernel_radius);
    c.checks = j.value("checks", def.checks);
    const auto& hd = sub("holder", {"axis", "q"});
    c.holder_axis = hd.value("axis", def.holder_axis);
    c.q = hd.value("q", def.q);
}

inline ExperimentConfig parse_config(const std::string& text) {
    try {
        return nlohmann::json::parse(text).get<ExperimentConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

/// Canonical serialization: keys sorted, fixed indentation.
inline std::string canonical_json(const ExperimentConfig& c) { return nlohmann::json(c).dump(2); }

/// Lowercase hex SHA-256.
inline std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw ResourceError("EVP_MD_CTX_new failed");
    const bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, data.data(), data.size()) == 1 && EVP_DigestFinal_ex(ctx, md, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw ResourceError("sha256 failed");
    std::ostringstream os;
    for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

inline std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ResourceError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

struct RunManifest {
    std::string config_hash;
    std::string tool_version = kToolVersion;
    double wall_time_s = 0.0;
    std::vector<std::pair<std::string, std::string>> outputs;  ///< file name, sha256
};

inline nlohmann::json manifest_json(const RunManifest& m) {
    nlohmann::json files = nlohmann::json::array();
    for (const auto& [name, digest] : m.outputs) files.push_back({{"file", name}, {"sha256", digest}});
    return {{"config_hash", m.config_hash}, {"tool_version", m.tool_version}, {"wall_time_s", m.wall_time_s}, {"outputs", files}};
}

/// Opens `dir / name` for writing, creating `dir` if needed.
inline std::ofstream open_output(const std::filesystem::path& dir, const std::string& name) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream out(dir / name);
    if (!out) throw ResourceError("cannot write " + (dir / name).string());
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    return out;
}

inline void write_text(const std::filesystem::path& dir, const std::string& name, const std::string& text) {
    auto out = open_output(dir, name);
    out << text;
    if (!out) throw ResourceError("write failed for " + (dir / name).string());
}

inline std::string xs_header(int d) {
    std::string h;
    for (int a = 1; a <= d; ++a) h += ",x" + std::to_string(a);
    return h;
}

/// `t,x1..xd,kind,value`: every signed offset of the box, then one `<kind>-mass`
/// row per time with empty coordinates holding sum_x value (times delta^d for btbm).
inline void write_kernel_table_csv(std::ostream& out, const KernelTable& tab) {
    out << "t" << xs_header(tab.d) << ",kind,value\n";
    const double cell = tab.kind == "btbm" ? std::pow(tab.delta, tab.d) : 1.0;
    for (std::size_t i = 0; i < tab.times.size(); ++i) {
        double mass = 0.0;
        const KernelBox& box = tab.boxes[i];
        detail::for_each_offset(tab.d, tab.radius, [&](std::span<const long> off) {
            const double v = box.at(off);
            out << tab.times[i];
            for (long o : off) out << ',' << o * tab.delta;
            out << ',' << tab.kind << ',' << v << '\n';
            mass += v * cell;
        });
        out << tab.times[i];
        for (int a = 0; a < tab.d; ++a) out << ',';
        out << ',' << tab.kind << "-mass," << mass << '\n';
    }
}

/// `t,x1..xd,value,det_value,replicate`.
inline void write_solution_header(std::ostream& out, int d) { out << "t" << xs_header(d) << ",value,det_value,replicate\n"; }

inline void write_solution_rows(std::ostream& out, const SolutionField& f) {
    const std::size_t M = f.sites();
    for (std::size_t k = 0; k < f.times.size(); ++k)
        for (std::size_t i = 0; i < M; ++i) {
            out << f.times[k];
            for (double c : f.lattice.coords_of(i)) out << ',' << c;
            out << ',' << f.values[k * M + i] << ',' << f.det[k * M + i] << ',' << f.replicate << '\n';
        }
}

/// `lag,log_moment,stderr`.
inline void write_holder_csv(std::ostream& out, const HolderReport& r) {
    out << "lag,log_moment,stderr\n";
    for (std::size_t i = 0; i < r.lags.size(); ++i) out << r.lags[i] << ',' << r.log_moments[i] << ',' << r.log_stderr[i] << '\n';
}

inline std::string to_string(Criterion c) {
    switch (c) {
        case Criterion::slope: return "slope";
        case Criterion::below: return "below";
        case Criterion::bounded_ratio: return "bounded_ratio";
        case Criterion::decreasing: return "decreasing";
        case Criterion::within: return "within";
    }
    return "unknown";
}

inline nlohmann::json report_json(const EstimateReport& r) {
    nlohmann::json j = {{"quantity", r.quantity},
                        {"parameter_names", r.parameter_names},
                        {"parameters", r.parameters},
                        {"values", r.values},
                        {"criterion", to_string(r.criterion)},
                        {"reference", r.reference},
                        {"reference_source", r.reference_source},
                        {"tolerance", r.tolerance},
                        {"pass", r.passed()}};
    if (r.fit) j["fit"] = {{"slope", r.fit->slope}, {"intercept", r.fit->intercept}, {"stderr", r.fit->slope_stderr}};
    return j;
}

inline nlohmann::json holder_json(const HolderReport& r, double tol) {
    return {{"axis", to_string(r.axis)},
            {"d", r.d},
            {"q", r.q},
            {"replicates", r.count},
            {"lags", r.lags},
            {"log_moments", r.log_moments},
            {"log_stderr", r.log_stderr},
            {"slope", r.fit.slope},
            {"slope_stderr", r.fit.slope_stderr},
            {"moment_reference", r.moment_reference},
            {"reference_exponent", r.holder_reference},
            {"tolerance", tol},
            {"pass", r.passed(tol)}};
}

inline nlohmann::json moment_json(const MomentSeries& m) {
    return {{"q", m.q}, {"replicates", m.count}, {"times", m.times}, {"values", m.values},
            {"stderr", m.stderr_of_mean}, {"super_exponential", m.super_exponential}};
}

}  // namespace btp
