// btp: kernel tables, estimate checks, SIE solves and Hoelder fits from a JSON config.
//
// Exit codes: 0 success, 1 check failure, 2 usage or config error, 3 non-convergence.

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "btp/checks.hpp"
#include "btp/io.hpp"
#include "btp/montecarlo.hpp"
#include "btp/solver.hpp"

namespace {

using namespace btp;
using nlohmann::json;

constexpr int kExitPass = 0, kExitFail = 1, kExitUsage = 2, kExitNoConv = 3;

struct Outputs {
    std::filesystem::path dir;
    RunManifest manifest;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void add(const std::string& name) { manifest.outputs.emplace_back(name, sha256_file(dir / name)); }
    void text(const std::string& name, const std::string& body) {
        write_text(dir, name, body);
        add(name);
    }
    void finish() {
        manifest.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_text(dir, "manifest.json", manifest_json(manifest).dump(2) + "\n");
    }
};

Outputs start_outputs(const ExperimentConfig& c) {
    Outputs o;
    o.dir = c.out;
    o.manifest.config_hash = sha256_hex(canonical_json(c));
    return o;
}

int cmd_kernel_table(const ExperimentConfig& c, unsigned threads) {
    if (c.kernel_times.empty()) throw ConfigError("kernel.times is empty");
    for (double t : c.kernel_times)
        if (!(t > 0.0)) throw ConfigError("kernel times must be positive");
    const KernelTable tab = build_kernel_table(c.kernel_kind, c.kernel_times, c.delta, c.d, c.kernel_radius, c.quadrature, threads);
    Outputs o = start_outputs(c);
    {
        auto out = open_output(o.dir, "kernel_table.csv");
        write_kernel_table_csv(out, tab);
    }
    o.add("kernel_table.csv");
    o.finish();
    std::cout << "wrote " << (o.dir / "kernel_table.csv").string() << "\n";
    return kExitPass;
}

int cmd_verify(const ExperimentConfig& c) {
    std::vector<std::string> names = c.checks;
    if (names.empty())
        for (const auto& n : check_names())
            if (n != "spatial" || c.d != 2) names.push_back(n);
    json list = json::array();
    bool all = true;
    for (const auto& n : names) {
        const CheckResult r = run_check(n, c.d, c.quadrature);
        const bool ok = r.report.passed();
        all = all && ok;
        json j = report_json(r.report);
        j["check"] = r.name;
        j["property"] = r.property;
        j["d"] = c.d;
        list.push_back(j);
        std::cout << (ok ? "PASS " : "FAIL ") << r.name << ": " << r.property << "\n";
    }
    Outputs o = start_outputs(c);
    o.text("verify.json", json{{"checks", list}, {"pass", all}}.dump(2) + "\n");
    o.finish();
    return all ? kExitPass : kExitFail;
}

/// Replicates are computed in fixed chunks and written in index order, so the
/// files do not depend on the thread count.
template <class Solve>
void run_replicates(const ExperimentConfig& c, unsigned threads, Solve&& solve, std::ostream& csv,
                    std::optional<MomentTracker>& moments, json& per_rep) {
    constexpr std::size_t kChunk = 64;
    for (std::size_t b = 0; b < c.replicates; b += kChunk) {
        const std::size_t n = std::min(kChunk, c.replicates - b);
        std::vector<SolutionField> fields(n);
        parallel_for(n, threads, [&](std::size_t i) { fields[i] = solve(b + i); });
        for (const auto& f : fields) {
            write_solution_rows(csv, f);
            if (moments) moments->add(f);
            json r = {{"replicate", f.replicate}};
            if (f.iterations > 0) {
                r["iterations"] = f.iterations;
                r["final_residual"] = f.residuals.back();
            }
            per_rep.push_back(r);
        }
    }
}

int cmd_solve(const ExperimentConfig& c, unsigned threads) {
    if (c.replicates == 0) throw ConfigError("replicates must be >= 1");
    const DiffusionSpec a = make_diffusion(c.diffusion, c.diffusion_param);
    const LatticeSpec spec = c.lattice();
    Outputs o = start_outputs(c);
    json summary = {{"solver", c.solver}, {"replicates", c.replicates}, {"diffusion", c.diffusion}};

    if (c.solver == "psdde") {
        const std::vector<int> levels = c.levels.empty() ? std::vector<int>{10, 12} : c.levels;
        const PsddeCheck chk = psdde_diagonal_check(c.initial_condition().on(spec), a, c.seed, c.horizon, levels,
                                                     c.reference_level, c.replicates, threads);
        json lv = json::array();
        for (const auto& l : chk.levels)
            lv.push_back({{"level", l.level}, {"rms", l.rms}, {"stderr", l.rms_stderr}, {"estimate", l.estimate}});
        summary["diagonal_residual"] = lv;
        summary["reference_level"] = c.reference_level;
        summary["second_moment"] = chk.second_moment;
        summary["isometry"] = chk.isometry;
    } else if (c.solver == "sdde") {
        const std::vector<int> levels = c.levels.empty() ? std::vector<int>{10, 11, 12, 13} : c.levels;
        const SddeStudy st = sdde_residual_study(c.initial_condition().on(spec), a, c.seed, c.horizon, levels, c.replicates, threads);
        json lv = json::array();
        for (std::size_t i = 0; i < st.levels.size(); ++i)
            lv.push_back({{"level", st.levels[i]}, {"rms", st.rms[i]}, {"stderr", st.rms_stderr[i]}});
        summary["kernel_residual"] = lv;
    } else if (c.solver == "picard" || c.solver == "euler") {
        const TimeGrid grid = c.time_grid();
        const SieProblem p(spec, c.initial_condition(), a, grid, c.quadrature, threads);
        const NoiseSystem noise(c.seed, grid.dt, grid.steps);
        std::vector<std::size_t> taus;
        if (c.solver == "euler") {
            const std::size_t m = detail::steps_per_level(p, c.euler_level);
            for (std::size_t k = 0; k <= grid.steps; k += m) taus.push_back(k);
        }
        std::vector<double> times;
        if (c.solver == "picard")
            for (std::size_t k = 0; k <= grid.steps; ++k) times.push_back(grid.at(k));
        else
            for (std::size_t k : taus) times.push_back(grid.at(k));
        std::optional<MomentTracker> moments;
        if (c.replicates >= 100) moments.emplace(spec, times, 1.0);
        json per_rep = json::array();
        {
            auto csv = open_output(o.dir, "fields.csv");
            write_solution_header(csv, c.d);
            if (c.solver == "picard")
                run_replicates(c, threads, [&](std::size_t r) { return picard_solve(p, noise, r, c.picard_max_iter, c.picard_tol); },
                               csv, moments, per_rep);
            else
                run_replicates(c, threads, [&](std::size_t r) { return auxiliary_sweep(p, noise, r, taus, c.euler_level); },
                               csv, moments, per_rep);
        }
        o.add("fields.csv");
        summary["per_replicate"] = per_rep;
        if (c.solver == "picard") summary["tol"] = c.picard_tol;
        if (moments) summary["moments"] = moment_json(moments->result());
    } else {
        throw ConfigError("unknown solver '" + c.solver + "'");
    }
    o.text("summary.json", summary.dump(2) + "\n");
    o.finish();
    return kExitPass;
}

int cmd_holder(const ExperimentConfig& c, unsigned threads) {
    if (c.replicates == 0) throw ConfigError("empty ensemble: replicates must be >= 1");
    HolderExperiment e;
    e.d = c.d;
    e.delta = c.delta;
    e.l = c.l;
    e.horizon = c.horizon;
    e.level = c.level;
    e.q = c.q;
    e.replicates = c.replicates;
    e.seed = c.seed;
    e.threads = threads;
    const HolderResult res = run_holder_experiment(e);
    constexpr double kTol = 0.08;
    Outputs o = start_outputs(c);
    json j = {{"time", holder_json(res.time, kTol)}};
    {
        std::ostringstream csv;
        csv << std::setprecision(std::numeric_limits<double>::max_digits10);
        write_holder_csv(csv, res.time);
        o.text("holder_time.csv", csv.str());
    }
    bool ok = res.time.passed(kTol);
    if (res.space) {
        j["space"] = holder_json(*res.space, kTol);
        std::ostringstream csv;
        csv << std::setprecision(std::numeric_limits<double>::max_digits10);
        write_holder_csv(csv, *res.space);
        o.text("holder_space.csv", csv.str());
        ok = ok && res.space->fit.slope >= 1.8;
    }
    j["pass"] = ok;
    o.text("holder.json", j.dump(2) + "\n");
    o.finish();
    std::cout << (ok ? "PASS" : "FAIL") << " time slope " << res.time.fit.slope << " (reference " << res.time.moment_reference
              << ")\n";
    return ok ? kExitPass : kExitFail;
}

const char* env(const char* name) {
    const char* v = std::getenv(name);
    return v && *v ? v : nullptr;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Brownian-time process kernels, estimates and SIE solvers"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    app.add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "master seed (overrides the config)");
    app.add_option("--threads", threads, "worker cap (0 = hardware)");
    app.add_option("--out", out_dir, "output directory (overrides BTP_OUT and the config)");

    auto* kt = app.add_subcommand("kernel-table", "tabulate BTRW or BTBM kernels");
    auto* vf = app.add_subcommand("verify", "run estimate checks");
    std::vector<std::string> checks;
    std::optional<int> dim;
    vf->add_option("--check", checks, "check name (repeatable)");
    vf->add_option("--d", dim, "dimension");
    auto* sv = app.add_subcommand("solve", "solve the lattice SIE");
    auto* hd = app.add_subcommand("holder", "fit Hoelder exponents of the additive-noise solution");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        ExperimentConfig c = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
        c.command = kt->parsed() ? "kernel-table" : vf->parsed() ? "verify" : sv->parsed() ? "solve" : "holder";
        if (seed) c.seed = *seed;
        if (!out_dir.empty())
            c.out = out_dir;
        else if (const char* o = env("BTP_OUT"))
            c.out = o;
        if (dim) c.d = *dim;
        if (!checks.empty()) c.checks = checks;
        unsigned nthreads = 1;
        if (threads)
            nthreads = *threads;
        else if (const char* t = env("BTP_THREADS"))
            nthreads = static_cast<unsigned>(std::stoul(t));
        nthreads = resolve_threads(nthreads);

        if (kt->parsed()) return cmd_kernel_table(c, nthreads);
        if (vf->parsed()) return cmd_verify(c);
        if (sv->parsed()) return cmd_solve(c, nthreads);
        if (hd->parsed()) return cmd_holder(c, nthreads);
    } catch (const ConvergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNoConv;
    } catch (const std::invalid_argument& e) {  // DomainError, ConfigError, stoul
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ResourceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
