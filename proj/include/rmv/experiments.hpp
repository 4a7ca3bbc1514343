#pragma once

// Multi-stage pipelines shared by the CLI and the acceptance suite.
//
// Propagation of chaos: the reference law is the mean-field fixed point with
// M_ref copies. For every N and replicate the particle system is compared
// to it by sup_t W2^2 over a fixed set of evaluation times. Two further
// numbers are reported:
//   * self distance sup_t W2^2(mu^N, mu^{2N}) between neighbouring list
//     entries with ratio 2 (same replicate index, independent seeds);
//   * coupled distance sup_t mean_i |X^{i,N}_t - Y^i_t|^2 where Y^i solves the
//     decoupled equation driven by the fixed-point g with the same noise.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "engine.hpp"
#include "meanfield.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "recorder.hpp"
#include "rng.hpp"

namespace rmv {

struct PocOptions {
    double dt = 1e-3;
    double T = 1.0;
    double epsilon = 1.0;
    std::vector<std::size_t> n_list{64, 128, 256, 512, 1024, 2048};
    std::size_t m_ref = 32768;
    std::size_t replicates = 8;
    std::size_t eval_stride = 10; // evaluation every eval_stride grid steps, t > 0
    double ref_tol = 1e-3;
    std::size_t ref_max_iter = 40;
    std::uint64_t seed = 0;
    int workers = 1;
    InteractionMethod method = InteractionMethod::automatic;
};

struct PocRow {
    std::size_t n = 0;
    double w2sq = 0.0, w2sq_stderr = 0.0;         // sup_t W2^2(mu^N, mu_ref), replicate mean
    double coupled = 0.0, coupled_stderr = 0.0;   // sup_t mean |X^N - Y|^2
    double self_w2sq = -1.0, self_stderr = 0.0;   // sup_t W2^2(mu^N, mu^2N); -1 when 2N not in the list
};

struct PocResult {
    std::vector<PocRow> rows;
    LinearFit fit_w2sq, fit_w2, fit_coupled;
    FixedPointResult reference;
    StepStats stats; // all particle and reference runs
    std::vector<double> eval_times;
};

namespace detail {

inline std::vector<double> sorted_at(const Snapshot& s) {
    std::vector<double> v = s.positions;
    std::sort(v.begin(), v.end());
    return v;
}

} // namespace detail

inline PocResult run_poc(const ModelCoefficients& model, const ConvexDomain& domain, const PocOptions& o) {
    if (model.dim != 1) throw ConfigError("poc uses exact 1-D Wasserstein distances and needs d = 1");
    if (o.n_list.size() < 3) throw ConfigError("poc needs at least three N values");
    if (o.replicates < 1 || o.eval_stride < 1) throw ConfigError("replicates and eval_stride must be >= 1");
    PocResult res;
    const auto K = static_cast<std::uint64_t>(std::llround(o.T / o.dt));
    for (std::uint64_t k = o.eval_stride; k <= K; k += o.eval_stride) res.eval_times.push_back(static_cast<double>(k) * o.dt);

    FixedPointOptions fo;
    fo.gamma.M = o.m_ref;
    fo.gamma.dt = o.dt;
    fo.gamma.T = o.T;
    fo.gamma.epsilon = o.epsilon;
    fo.gamma.seed = derive_seed(o.seed, 0xfe0);
    fo.gamma.full_snapshot_times = res.eval_times;
    fo.gamma.method = o.method;
    fo.gamma.workers = o.workers;
    fo.tol = o.ref_tol;
    fo.max_iter = o.ref_max_iter;
    res.reference = fixed_point(model, domain, fo);
    res.stats += res.reference.stats;
    std::vector<std::vector<double>> ref_sorted;
    for (const auto& s : res.reference.law) ref_sorted.push_back(detail::sorted_at(s));
    const std::size_t nt = res.eval_times.size();

    // sorted[n_index][replicate][time]
    std::vector<std::vector<std::vector<std::vector<double>>>> sorted(o.n_list.size());
    for (std::size_t a = 0; a < o.n_list.size(); ++a) {
        const std::size_t n = o.n_list[a];
        PocRow row;
        row.n = n;
        std::vector<double> w2(o.replicates), cp(o.replicates);
        sorted[a].resize(o.replicates);
        for (std::size_t rep = 0; rep < o.replicates; ++rep) {
            StepOptions so;
            so.dt = o.dt;
            so.epsilon = o.epsilon;
            so.seed = derive_seed(o.seed, (static_cast<std::uint64_t>(n) << 16) + rep);
            so.method = o.method;
            so.taming = model.growth_order >= 3.0;
            so.workers = o.workers;
            StepOptions sy = so;
            sy.mode = InteractionMode::frozen_field;
            sy.frozen = res.reference.g.field();
            ReflectedStepper sx(model, domain, so), syst(model, domain, sy);
            ParticleCloud x = ParticleCloud::at_point(n, model.x0), y = x;
            double sup_w2 = 0.0, sup_cp = 0.0;
            std::size_t ti = 0;
            std::vector<double> gaps(n);
            for (std::uint64_t k = 1; k <= K; ++k) {
                res.stats += sx.step(x);
                res.stats += syst.step(y);
                for (std::size_t i = 0; i < n; ++i) gaps[i] = dist2(x.particle(i), y.particle(i));
                sup_cp = std::max(sup_cp, pairwise_sum(gaps) / static_cast<double>(n));
                if (ti < nt && k == static_cast<std::uint64_t>(std::llround(res.eval_times[ti] / o.dt))) {
                    Snapshot s{x.time, 1, x.positions, {}};
                    auto srt = detail::sorted_at(s);
                    sup_w2 = std::max(sup_w2, detail::w2sq_sorted(srt, ref_sorted[ti]));
                    sorted[a][rep].push_back(std::move(srt));
                    ++ti;
                }
            }
            w2[rep] = sup_w2;
            cp[rep] = sup_cp;
        }
        const auto mw = mean_stderr(w2), mc = mean_stderr(cp);
        row.w2sq = mw.mean;
        row.w2sq_stderr = mw.stderr_;
        row.coupled = mc.mean;
        row.coupled_stderr = mc.stderr_;
        res.rows.push_back(row);
    }
    for (std::size_t a = 0; a < o.n_list.size(); ++a)
        for (std::size_t b = 0; b < o.n_list.size(); ++b) {
            if (o.n_list[b] != 2 * o.n_list[a]) continue;
            std::vector<double> sd(o.replicates);
            for (std::size_t rep = 0; rep < o.replicates; ++rep) {
                double sup = 0.0;
                for (std::size_t t = 0; t < nt; ++t)
                    sup = std::max(sup, detail::w2sq_sorted(sorted[a][rep][t], sorted[b][rep][t]));
                sd[rep] = sup;
            }
            const auto ms = mean_stderr(sd);
            res.rows[a].self_w2sq = ms.mean;
            res.rows[a].self_stderr = ms.stderr_;
        }

    std::vector<RatePoint> p2, p1, pc;
    for (const auto& r : res.rows) {
        p2.push_back({static_cast<double>(r.n), r.w2sq, r.w2sq_stderr});
        p1.push_back({static_cast<double>(r.n), std::sqrt(r.w2sq), 0.0});
        pc.push_back({static_cast<double>(r.n), r.coupled, r.coupled_stderr});
    }
    res.fit_w2sq = poc_rate_fit(p2);
    res.fit_w2 = poc_rate_fit(p1);
    // Without interaction the coupled paths coincide and there is nothing to fit.
    if (std::all_of(pc.begin(), pc.end(), [](const RatePoint& q) { return q.error > 0.0; }))
        res.fit_coupled = poc_rate_fit(pc);
    return res;
}

inline std::string poc_csv(const PocResult& r) {
    std::ostringstream os;
    os << "N[count],sup_w2sq[length^2],sup_w2sq_stderr[length^2],coupled_sq[length^2],coupled_sq_stderr[length^2],"
          "self_w2sq[length^2],self_w2sq_stderr[length^2]\n";
    for (const auto& row : r.rows)
        os << row.n << ',' << fmt_double(row.w2sq) << ',' << fmt_double(row.w2sq_stderr) << ','
           << fmt_double(row.coupled) << ',' << fmt_double(row.coupled_stderr) << ',' << fmt_double(row.self_w2sq)
           << ',' << fmt_double(row.self_stderr) << '\n';
    return os.str();
}

inline nlohmann::json fit_json(const LinearFit& f) {
    const double t = t_quantile_975(f.points >= 2 ? f.points - 2 : 0);
    return {{"slope", f.slope},
            {"intercept", f.intercept},
            {"slope_stderr", f.slope_stderr},
            {"ci95", {f.slope - t * f.slope_stderr, f.slope + t * f.slope_stderr}},
            {"points", f.points}};
}

inline nlohmann::json poc_summary(const PocResult& r) {
    return {{"w2sq", fit_json(r.fit_w2sq)},
            {"w2", fit_json(r.fit_w2)},
            {"coupled", fit_json(r.fit_coupled)},
            {"reference", r.reference.diagnostics()},
            {"exterior_states", r.stats.exterior_states},
            {"interior_local_time_growth", r.stats.interior_local_time_growth}};
}

} // namespace rmv
