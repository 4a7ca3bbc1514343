// rmvlab: experiment driver.
//
//   rmvlab <validate|simulate|poc|meanfield|ldp|exit> --config PATH
//          [--seed U64] [--workers INT] [--out DIR]
//
// Exit codes: 0 ok, 1 runtime failure, 2 invalid configuration.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "rmv/config.hpp"
#include "rmv/experiments.hpp"
#include "rmv/rmv.hpp"

#ifndef RMV_VERSION
#define RMV_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rmv;

namespace {

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 digest failed");
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        hex += buf;
    }
    return hex;
}

class Artifacts {
public:
    explicit Artifacts(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

    void write(const std::string& name, const std::string& content) {
        AtomicFile f(dir_ / name);
        f.stream() << content;
        f.commit();
        files_.push_back({{"file", name}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}});
    }

    void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

    const json& files() const { return files_; }
    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    json files_ = json::array();
};

struct RunContext {
    ExperimentConfig cfg;
    int workers = 1;
    Artifacts* out = nullptr;
    json summary = json::object(); // merged into the manifest
};

std::string f17(double v) { return fmt_double(v); }

json stats_json(const StepStats& s) {
    return {{"steps", s.steps},
            {"particle_steps", s.particle_steps},
            {"pushes", s.pushes},
            {"exterior_states", s.exterior_states},
            {"interior_local_time_growth", s.interior_local_time_growth},
            {"tamed", s.tamed}};
}

json num(double v) {
    if (std::isfinite(v)) return v;
    return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

Vector x0_param(const Params& p, const ModelCoefficients& m) {
    if (!p.has("x0")) return m.x0;
    Vector x = p.numbers("x0");
    require_dim(x.size(), m.dim, "params.x0");
    return x;
}

// ---- validate -----------------------------------------------------------------

void run_validate(RunContext& ctx) {
    const Params p(ctx.cfg.params, "params");
    p.allow({"probes"});
    const std::size_t probes = p.count("probes", 4096, 16, 1u << 24);
    const auto& cm = *ctx.cfg.model;
    json report = {{"model", cm.model.id}, {"domain", cm.domain.to_json()}};
    const auto base = probe_assumptions(cm.model, cm.domain, probes, ctx.cfg.seed);
    report["assumptions"] = base.to_json();
    bool pass = base.pass();
    if (cm.x_tilde && cm.contraction) {
        const auto ex = probe_exit_assumptions(to_exit_model(cm), cm.domain, probes, ctx.cfg.seed);
        report["exit_assumptions"] = ex.to_json();
        pass = pass && ex.pass();
    }
    report["all_pass"] = pass;
    ctx.out->write_json("assumptions.json", report);
    ctx.summary["all_pass"] = pass;
    std::cout << "assumption report for " << cm.model.id << ": " << (pass ? "all probes pass" : "violations found")
              << "\n";
}

// ---- simulate -----------------------------------------------------------------

void run_simulate(RunContext& ctx) {
    const Params p(ctx.cfg.params, "params");
    p.allow({"dt", "T", "epsilon", "N", "snapshot_times", "format", "interaction", "method", "taming", "x0"});
    const auto& cm = *ctx.cfg.model;
    SimConfig sc;
    sc.dt = p.positive("dt", 1e-3);
    sc.t_end = p.positive("T", 1.0);
    sc.epsilon = p.number("epsilon", 1.0, 0.0);
    sc.n_particles = p.count("N", 1024, 1, 1u << 24);
    sc.seed = ctx.cfg.seed;
    sc.workers = ctx.workers;
    sc.snapshot_times = p.numbers("snapshot_times", std::vector<double>{sc.t_end});
    const std::string inter = p.text("interaction", "particle_mean");
    if (inter == "particle_mean") sc.interaction = InteractionMode::particle_mean;
    else if (inter == "none") sc.interaction = InteractionMode::none;
    else throw ConfigError("params.interaction must be 'particle_mean' or 'none'");
    sc.method = parse_method(p.text("method", "automatic"));
    sc.taming = p.optional_flag("taming");
    sc.x0 = x0_param(p, cm.model);
    const std::string format = p.text("format", "csv");
    if (format != "csv" && format != "binary") throw ConfigError("params.format must be 'csv' or 'binary'");
    sc.validate();

    std::ostringstream snaps;
    std::unique_ptr<Recorder> rec;
    if (format == "csv") rec = std::make_unique<CsvSnapshotWriter>(snaps);
    else rec = std::make_unique<BinarySnapshotWriter>(snaps, json{{"model", cm.model.id}, {"seed", ctx.cfg.seed}});
    const auto res = simulate_paths(cm.model, cm.domain, sc, rec.get());
    rec->finish();
    ctx.out->write(format == "csv" ? "snapshots.csv" : "snapshots.bin", snaps.str());

    std::ostringstream mom;
    const auto& m2 = res.moments[0];
    const auto& mr = res.moments[1];
    mom << "t[time],m" << f17(m2.p) << "[length^p],m" << f17(m2.p) << "_stderr[length^p],m" << f17(mr.p)
        << "[length^p],m" << f17(mr.p) << "_stderr[length^p]\n";
    for (std::size_t k = 0; k < m2.mean.size(); ++k)
        mom << f17(static_cast<double>(k) * sc.dt) << ',' << f17(m2.mean[k]) << ',' << f17(m2.stderr_[k]) << ','
            << f17(mr.mean[k]) << ',' << f17(mr.stderr_[k]) << '\n';
    ctx.out->write("moments.csv", mom.str());

    json moments = json::array();
    for (const auto& m : res.moments)
        moments.push_back({{"p", m.p}, {"sup", m.sup}, {"sup_stderr", m.sup_stderr}, {"bound", num(m.bound)},
                           {"below_bound", m.sup <= m.bound}});
    json s = {{"steps", res.steps}, {"stats", stats_json(res.stats)}, {"moments", moments}};
    ctx.out->write_json("summary.json", s);
    ctx.summary = s;
}

// ---- poc ----------------------------------------------------------------------

void run_poc_cmd(RunContext& ctx) {
    const Params p(ctx.cfg.params, "params");
    p.allow({"dt", "T", "epsilon", "N_list", "M_ref", "replicates", "eval_stride", "ref_tol", "ref_max_iter",
             "method"});
    const auto& cm = *ctx.cfg.model;
    PocOptions o;
    o.dt = p.positive("dt", 1e-3);
    o.T = p.positive("T", 1.0);
    o.epsilon = p.number("epsilon", 1.0, 0.0);
    o.n_list = p.counts("N_list", std::vector<std::size_t>{64, 128, 256, 512, 1024, 2048});
    o.m_ref = p.count("M_ref", 16 * *std::max_element(o.n_list.begin(), o.n_list.end()), 2);
    o.replicates = p.count("replicates", 8);
    o.eval_stride = p.count("eval_stride", 10);
    o.ref_tol = p.positive("ref_tol", 1e-3);
    o.ref_max_iter = p.count("ref_max_iter", 40);
    o.method = parse_method(p.text("method", "automatic"));
    o.seed = ctx.cfg.seed;
    o.workers = ctx.workers;
    const auto r = run_poc(cm.model, cm.domain, o);
    ctx.out->write("poc_rate.csv", poc_csv(r));
    const json s = poc_summary(r);
    ctx.out->write_json("poc_fit.json", s);
    ctx.summary = s;
    std::cout << "sup_t W2^2 slope " << r.fit_w2sq.slope << " (W2 slope " << r.fit_w2.slope << ")\n";
}

// ---- meanfield ------------------------------------------------------------------

void run_meanfield(RunContext& ctx) {
    const Params p(ctx.cfg.params, "params");
    p.allow({"dt", "T", "epsilon", "M", "tol", "max_iter", "store_limit", "snapshot_times", "method",
             "probe_time_nodes", "x0"});
    const auto& cm = *ctx.cfg.model;
    FixedPointOptions fo;
    fo.gamma.dt = p.positive("dt", 1e-3);
    fo.gamma.T = p.positive("T", 1.0);
    fo.gamma.epsilon = p.number("epsilon", 1.0, 0.0);
    fo.gamma.M = p.count("M", 4096, 2);
    fo.gamma.store_limit = p.count("store_limit", 1024);
    fo.gamma.full_snapshot_times = p.numbers("snapshot_times", std::vector<double>{fo.gamma.T});
    fo.gamma.method = parse_method(p.text("method", "automatic"));
    fo.gamma.seed = ctx.cfg.seed;
    fo.gamma.workers = ctx.workers;
    fo.gamma.x0 = x0_param(p, cm.model);
    fo.tol = p.positive("tol", 1e-2);
    fo.max_iter = p.count("max_iter", 30);
    fo.probe_time_nodes = p.count("probe_time_nodes", 101, 2);
    fo.x_tilde = cm.x_tilde;
    fo.throw_on_failure = false;
    const auto r = fixed_point(cm.model, cm.domain, fo);

    std::ostringstream law;
    CsvSnapshotWriter w(law);
    for (const auto& s : r.law) {
        ParticleCloud c = ParticleCloud::from_positions(s.positions, s.dim);
        c.local_time_magnitude = s.local_time_magnitude;
        c.time = s.time;
        w.record(c);
    }
    ctx.out->write("law.csv", law.str());

    const auto probes = make_probe_grid(cm.domain, *fo.gamma.x0, cm.x_tilde, fo.gamma.T, fo.gamma.dt, 11);
    std::ostringstream g;
    const std::size_t d = cm.model.dim;
    g << "t[time]";
    for (std::size_t k = 0; k < d; ++k) g << ",x" << k + 1 << "[length]";
    for (std::size_t k = 0; k < d; ++k) g << ",g" << k + 1 << "[length/time]";
    g << '\n';
    Vector v(d);
    for (const auto& pr : probes) {
        r.g(pr.t, pr.x, v);
        g << f17(pr.t);
        for (double x : pr.x) g << ',' << f17(x);
        for (double x : v) g << ',' << f17(x);
        g << '\n';
    }
    ctx.out->write("g_probe.csv", g.str());

    json diag = r.diagnostics();
    diag["stats"] = stats_json(r.stats);
    ctx.out->write_json("meanfield_diagnostics.json", diag);
    ctx.summary = diag;
    if (!r.converged) {
        std::ostringstream os;
        os << "fixed point did not converge; distances:";
        for (const auto& h : r.history) os << ' ' << h.distance;
        throw ConvergenceError(os.str(), r.history.back().distance);
    }
}

// ---- ldp --------------------------------------------------------------------------

ControlPath control_from(const json& j, std::size_t dn, double dt, double T) {
    const Params p(j, "params.control");
    p.allow({"kind", "slope", "amplitude", "frequency"});
    const std::string kind = p.text("kind", "zero");
    if (kind == "zero") return ControlPath::zero(dn, dt, T);
    if (kind == "linear") {
        const auto a = p.numbers("slope");
        require_dim(a.size(), dn, "control slope");
        return ControlPath::from_function(dn, dt, T, [&](double t, std::span<double> out) {
            for (std::size_t m = 0; m < dn; ++m) out[m] = a[m] * t;
        });
    }
    if (kind == "sine") {
        const auto a = p.numbers("amplitude");
        require_dim(a.size(), dn, "control amplitude");
        const double f = p.positive("frequency", 1.0);
        return ControlPath::from_function(dn, dt, T, [&](double t, std::span<double> out) {
            for (std::size_t m = 0; m < dn; ++m) out[m] = a[m] * std::sin(2.0 * std::numbers::pi * f * t);
        });
    }
    throw ConfigError("params.control.kind must be zero, linear or sine");
}

std::string path_csv(const PathGrid& g) {
    std::ostringstream os;
    os << "t[time]";
    for (std::size_t k = 0; k < g.dim; ++k) os << ",x" << k + 1 << "[length]";
    os << ",k_abs[length]\n";
    for (std::size_t k = 0; k <= g.steps(); ++k) {
        os << f17(static_cast<double>(k) * g.dt);
        for (double v : g.at(k)) os << ',' << f17(v);
        os << ',' << f17(g.local_time[k]) << '\n';
    }
    return os.str();
}

void run_ldp(RunContext& ctx) {
    const Params p(ctx.cfg.params, "params");
    p.allow({"dt", "T", "control", "n_list", "epsilon_list", "paths", "x0", "method"});
    const auto& cm = *ctx.cfg.model;
    const double dt = p.positive("dt", 1.0 / 1024.0);
    const double T = p.positive("T", 1.0);
    const Vector x0 = x0_param(p, cm.model);
    const ControlPath h = control_from(p.has("control") ? p.raw("control") : json::object(), cm.model.noise_dim, dt, T);
    const auto n_list = p.counts("n_list", std::vector<std::size_t>{4, 16, 64, 256});
    const auto eps_list = p.numbers("epsilon_list", std::vector<double>{0.2, 0.1, 0.05});
    const std::size_t paths = p.count("paths", 2048, 2);

    const auto ps = psi(cm.model, cm.domain, x0, dt, T);
    const auto H = skeleton(cm.model, cm.domain, x0, h);
    ctx.out->write("psi.csv", path_csv(ps));
    ctx.out->write("skeleton.csv", path_csv(H));

    std::ostringstream es;
    es << "n[count],sup_gap[length]\n";
    json gaps = json::array();
    for (std::size_t n : n_list) {
        const double gap = sup_distance(euler_skeleton(cm.model, cm.domain, x0, h, n), H);
        es << n << ',' << f17(gap) << '\n';
        gaps.push_back({{"n", n}, {"sup_gap", gap}});
    }
    ctx.out->write("euler_skeleton.csv", es.str());

    ConcentrationOptions co;
    co.dt = dt;
    co.T = T;
    co.paths = paths;
    co.seed = ctx.cfg.seed;
    co.workers = ctx.workers;
    co.method = parse_method(p.text("method", "automatic"));
    const auto rows = concentration_check(cm.model, cm.domain, x0, eps_list, co);
    std::ostringstream cs;
    cs << "epsilon[1],sup_mean_sq[length^2],sup_stderr[length^2],sup_time[time]\n";
    for (const auto& r : rows)
        cs << f17(r.epsilon) << ',' << f17(r.sup_mean) << ',' << f17(r.sup_stderr) << ',' << f17(r.sup_time) << '\n';
    ctx.out->write("concentration.csv", cs.str());

    json s = {{"action", action(h)}, {"euler_gaps", gaps}};
    ctx.out->write_json("ldp.json", s);
    ctx.summary = s;
}

// ---- exit -------------------------------------------------------------------------

void run_exit(RunContext& ctx) {
    const Params p(ctx.cfg.params, "params");
    p.allow({"dt", "epsilon_list", "paths", "t_cap", "kappa", "r", "x0", "inner", "compact", "eta",
             "coupling_epsilon", "method"});
    const auto& cm = *ctx.cfg.model;
    if (!cm.x_tilde || !cm.contraction)
        throw ConfigError("exit runs need x_tilde and contraction (catalog entry or config keys)");
    if (!p.has("inner")) throw ConfigError("params.inner (exit domain) is required");
    std::optional<ConvexDomain> compact;
    if (p.has("compact")) compact = ConvexDomain::from_json(p.raw("compact"));
    const ExitScenario sc =
        make_exit_scenario(to_exit_model(cm), cm.domain, ConvexDomain::from_json(p.raw("inner")), x0_param(p, cm.model),
                           p.positive("kappa", 0.5), p.number("r", 2.0, 1.0 + 1e-12), compact);
    ExitOptions o;
    o.dt = p.positive("dt", 5e-4);
    o.paths = p.count("paths", 1024, 2);
    o.t_cap = p.positive("t_cap", 600.0);
    o.seed = ctx.cfg.seed;
    o.workers = ctx.workers;
    o.method = parse_method(p.text("method", "automatic"));
    const auto eps_list = p.numbers("epsilon_list", std::vector<double>{1.0, 0.7, 0.5, 0.4});
    for (double e : eps_list)
        if (!(e > 0.0)) throw ConfigError("params.epsilon_list entries must be positive");

    std::ostringstream taus, clock;
    taus << "epsilon[1],replicate[index],tau[time],censored[bool]\n";
    clock << "epsilon[1],t[time],xi[length^r],xi_stderr[length^r]\n";
    std::vector<KramersPoint> pts;
    json per_eps = json::array();
    for (double e : eps_list) {
        const auto run = exit_time_mc(sc, e, o);
        for (std::size_t i = 0; i < run.tau.size(); ++i)
            taus << f17(e) << ',' << i << ',' << f17(run.tau[i]) << ',' << int(run.censored[i]) << '\n';
        for (std::size_t k = 0; k < run.clock.times.size(); ++k)
            clock << f17(e) << ',' << f17(run.clock.times[k]) << ',' << f17(run.clock.xi[k]) << ','
                  << f17(run.clock.xi_stderr[k]) << '\n';
        pts.push_back(to_kramers_point(run));
        per_eps.push_back({{"epsilon", e},
                           {"mean_tau", run.mean_tau},
                           {"stderr_tau", run.stderr_tau},
                           {"censored", run.censored_count},
                           {"too_small_for_budget", run.too_small_for_budget},
                           {"t_hat", run.clock.t_hat ? json(*run.clock.t_hat) : json(nullptr)},
                           {"pre_convergence_fraction", run.pre_convergence_fraction},
                           {"moment_bounds", run.clock.bounds.to_json()},
                           {"stats", stats_json(run.stats)}});
        std::cout << "epsilon " << e << ": mean tau " << run.mean_tau << " +- " << run.stderr_tau << ", censored "
                  << run.censored_count << "\n";
    }
    ctx.out->write("exit_times.csv", taus.str());
    ctx.out->write("moment_clock.csv", clock.str());

    const double d_classical = exit_cost(sc, CostConvention::classical).value;
    const double d_paper = exit_cost(sc, CostConvention::paper).value;
    json s = {{"per_epsilon", per_eps},
              {"delta_classical", d_classical},
              {"delta_paper", d_paper},
              {"target_slope_classical", 2.0 * d_classical},
              {"target_slope_paper", 2.0 * d_paper},
              {"eta_kappa", eta_kappa(sc, sc.kappa)}};
    if (p.has("coupling_epsilon")) {
        CouplingOptions co;
        co.run = o;
        if (p.has("eta")) co.eta = p.positive("eta");
        const auto cr = coupling_gap(sc, p.positive("coupling_epsilon"), co);
        s["coupling"] = {{"t_hat", cr.t_hat ? json(*cr.t_hat) : json(nullptr)},
                         {"coupled", cr.coupled},
                         {"censored", cr.censored},
                         {"mean_sup_gap2", cr.mean_sup_gap2},
                         {"stderr_sup_gap2", cr.stderr_sup_gap2},
                         {"eta_kappa", cr.eta_kappa},
                         {"prob_exceed_eta_kappa", cr.prob_exceed_eta_kappa},
                         {"prob_exceed_user", cr.prob_exceed_user ? json(*cr.prob_exceed_user) : json(nullptr)}};
    }
    try {
        const auto fit = kramers_fit(pts);
        s["kramers"] = {{"slope", fit.fit.slope},
                        {"intercept", fit.fit.intercept},
                        {"slope_stderr", fit.fit.slope_stderr},
                        {"ci95", {fit.ci_low, fit.ci_high}},
                        {"used_epsilon", fit.used_eps},
                        {"warnings", fit.warnings}};
    } catch (const Error& e) {
        s["kramers"] = {{"error", e.what()}};
        ctx.out->write_json("kramers.json", s);
        throw;
    }
    ctx.out->write_json("kramers.json", s);
    ctx.summary = s["kramers"];
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"rmvlab: reflected McKean-Vlasov experiment driver"};
    app.require_subcommand(1);
    std::string config_path, out_dir;
    std::uint64_t seed = 0;
    int workers = default_workers();
    const std::vector<std::pair<Command, std::string>> commands = {
        {Command::validate, "probe model assumptions"},
        {Command::simulate, "simulate the particle system"},
        {Command::poc, "propagation-of-chaos rate study"},
        {Command::meanfield, "mean-field fixed point"},
        {Command::ldp, "skeleton, Euler skeleton and concentration"},
        {Command::exit, "exit times, moment clock and Kramers fit"}};
    std::vector<CLI::App*> subs;
    CLI::Option* seed_opt = nullptr;
    for (const auto& [cmd, help] : commands) {
        auto* s = app.add_subcommand(to_string(cmd), help);
        s->add_option("--config", config_path, "experiment config (JSON)")->required();
        auto* so = s->add_option("--seed", seed, "override the config seed");
        if (!seed_opt) seed_opt = so;
        s->add_option("--workers", workers, "worker threads (default: available cores)")->check(CLI::Range(1, 4096));
        s->add_option("--out", out_dir, "output directory (overrides output_dir)");
        subs.push_back(s);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    Command cmd = Command::validate;
    bool seed_given = false;
    for (std::size_t i = 0; i < subs.size(); ++i)
        if (subs[i]->parsed()) {
            cmd = commands[i].first;
            seed_given = subs[i]->count("--seed") > 0;
        }

    RunContext ctx;
    try {
        ctx.cfg = load_config(config_path, cmd, seed_given ? std::optional<std::uint64_t>(seed) : std::nullopt);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    ctx.workers = workers;
    const fs::path dir = out_dir.empty() ? fs::path(ctx.cfg.output_dir) : fs::path(out_dir);

    const auto start = std::chrono::steady_clock::now();
    try {
        Artifacts art(dir);
        ctx.out = &art;
        switch (cmd) {
        case Command::validate: run_validate(ctx); break;
        case Command::simulate: run_simulate(ctx); break;
        case Command::poc: run_poc_cmd(ctx); break;
        case Command::meanfield: run_meanfield(ctx); break;
        case Command::ldp: run_ldp(ctx); break;
        case Command::exit: run_exit(ctx); break;
        }
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const json manifest = {{"config", ctx.cfg.raw},
                               {"command", to_string(cmd)},
                               {"code_version", RMV_VERSION},
                               {"workers", workers},
                               {"wall_seconds", wall},
                               {"outputs", art.files()},
                               {"summary", ctx.summary}};
        AtomicFile mf(dir / "manifest.json");
        mf.stream() << manifest.dump(2) << "\n";
        mf.commit();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << to_string(cmd) << " failed: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
