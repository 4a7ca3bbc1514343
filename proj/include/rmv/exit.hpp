#pragma once

// Exit-time laboratory: stability of flows, the moment clock
// xi(t) = E|X_t - x_tilde|^r and its closed-form bounds, Monte Carlo exit
// times from an open subdomain, the frozen-kernel coupling Z, the exit cost
// and the log-linear Kramers fit.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "engine.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "meanfield.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "vecmath.hpp"

namespace rmv {

struct ExitScenario {
    ExitModel model;
    ConvexDomain outer;   // reflecting domain
    ConvexDomain inner;   // open exit domain (interior of this set)
    ConvexDomain compact; // x_tilde in compact, compact inside inner
    Vector x0;
    double kappa = 0.5;
    double r = 2.0;

    const Vector& x_tilde() const { return model.x_tilde; }
    double L() const { return model.contraction; }
};

namespace detail {

inline double unbounded_ray() { return std::numeric_limits<double>::infinity(); }

// Largest s with c + s u in the closed set; infinity if the ray never leaves.
inline double ray_exit(const ConvexDomain& dom, std::span<const double> c, std::span<const double> u) {
    const std::size_t d = c.size();
    Vector p(d);
    auto inside = [&](double s) {
        for (std::size_t k = 0; k < d; ++k) p[k] = c[k] + s * u[k];
        return dom.contains(p, 0.0);
    };
    double lo = 0.0, hi = 1.0;
    while (inside(hi)) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e8) return unbounded_ray();
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        (inside(mid) ? lo : hi) = mid;
    }
    return lo;
}

// Unit directions: +-1 in 1-D, an even circle walk in 2-D, seeded Gaussian
// directions otherwise.
inline std::vector<Vector> directions(std::size_t d, std::size_t count) {
    std::vector<Vector> out;
    if (d == 1) return {Vector{1.0}, Vector{-1.0}};
    if (d == 2) {
        for (std::size_t j = 0; j < count; ++j) {
            const double a = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(count);
            out.push_back({std::cos(a), std::sin(a)});
        }
        return out;
    }
    const NormalStream rng(0x5eed, stream_tag::probe_points);
    for (std::size_t j = 0; j < count; ++j) {
        Vector u(d);
        rng.fill(j, 1, u);
        const double n = norm(u);
        for (auto& v : u) v /= n;
        out.push_back(std::move(u));
    }
    return out;
}

inline std::vector<Vector> boundary_points(const ConvexDomain& dom, std::span<const double> c, std::size_t count) {
    std::vector<Vector> pts;
    for (const auto& u : directions(c.size(), count)) {
        const double s = ray_exit(dom, c, u);
        if (!std::isfinite(s)) continue;
        Vector p(c.size());
        for (std::size_t k = 0; k < p.size(); ++k) p[k] = c[k] + s * u[k];
        pts.push_back(std::move(p));
    }
    return pts;
}

inline double diameter_proxy(const ConvexDomain& dom) {
    auto [lo, hi] = dom.probe_box(5.0);
    double w = 0.0;
    for (std::size_t k = 0; k < lo.size(); ++k) w = std::max(w, hi[k] - lo[k]);
    return w;
}

// {x : dist(x, complement) >= m}, built face by face.
inline ConvexDomain shrink(const ConvexDomain& dom, double m) {
    switch (dom.kind()) {
    case DomainKind::box:
    case DomainKind::orthant: {
        const auto& b = dom.shape<ConvexDomain::BoxShape>();
        Vector lo = b.lo, hi = b.hi;
        for (std::size_t k = 0; k < lo.size(); ++k) {
            lo[k] += m;
            hi[k] -= m;
        }
        return ConvexDomain::box(lo, hi);
    }
    case DomainKind::ball: {
        const auto& s = dom.shape<ConvexDomain::BallShape>();
        return ConvexDomain::ball(s.center, s.radius - m);
    }
    case DomainKind::half_space: {
        const auto& h = dom.shape<ConvexDomain::HalfSpaceShape>();
        return ConvexDomain::half_space(h.face.normal, h.face.offset - m);
    }
    case DomainKind::polyhedron: {
        auto faces = dom.shape<ConvexDomain::PolyhedronShape>().faces;
        for (auto& f : faces) f.offset -= m;
        return ConvexDomain::polyhedron(faces);
    }
    }
    throw ConfigError("cannot shrink domain");
}

} // namespace detail

// Default compact set: points at distance >= 0.1 * (largest probe-box width)
// from the complement of the exit domain.
inline ConvexDomain default_compact(const ConvexDomain& inner) {
    return detail::shrink(inner, 0.1 * detail::diameter_proxy(inner));
}

struct ScenarioCheck {
    double containment_margin = 0.0; // min distance from sampled boundary of inner to the outer boundary
    bool x0_inside = false;
    bool x_tilde_in_compact = false;
    bool compact_inside_inner = false;
    bool ok() const { return containment_margin > 0.0 && x_tilde_in_compact && compact_inside_inner; }
};

inline ScenarioCheck check_scenario(const ExitScenario& s) {
    ScenarioCheck c;
    c.containment_margin = kInf;
    for (const auto& p : detail::boundary_points(s.inner, s.x_tilde(), 256))
        c.containment_margin = std::min(c.containment_margin, s.outer.depth(p));
    c.x0_inside = s.inner.contains_open(s.x0);
    c.x_tilde_in_compact = s.compact.contains(s.x_tilde(), 0.0);
    c.compact_inside_inner = true;
    for (const auto& p : detail::boundary_points(s.compact, s.x_tilde(), 256))
        c.compact_inside_inner = c.compact_inside_inner && s.inner.contains_open(p);
    return c;
}

inline ExitScenario make_exit_scenario(ExitModel model, ConvexDomain outer, ConvexDomain inner, Vector x0,
                                       double kappa, double r, std::optional<ConvexDomain> compact = std::nullopt) {
    if (!(kappa > 0.0)) throw ConfigError("kappa must be positive");
    if (!(r > 1.0)) throw ConfigError("r must be > 1");
    require_dim(x0.size(), model.base.dim, "scenario x0");
    require_dim(inner.dimension(), model.base.dim, "inner domain");
    require_dim(outer.dimension(), model.base.dim, "outer domain");
    if (!inner.contains_open(model.x_tilde)) throw ConfigError("x_tilde must lie in the exit domain");
    ConvexDomain k = compact ? *compact : default_compact(inner);
    ExitScenario s{std::move(model), std::move(outer), std::move(inner), std::move(k), std::move(x0), kappa, r};
    const auto chk = check_scenario(s);
    if (!chk.ok()) throw ConfigError("exit scenario fails containment checks");
    if (!s.outer.contains(s.x0, 0.0)) throw ConfigError("x0 lies outside the reflecting domain");
    return s;
}

// b = -2(x-1), f = -0.5 x^3 on [-2, 4], exit from (0, 2), x_tilde = 1.
inline ExitScenario kramers_scenario(double x0 = 1.55, double kappa = 0.5, double r = 2.0) {
    const auto c = make_ou_cubic_1d();
    return make_exit_scenario(to_exit_model(c), c.domain, ConvexDomain::interval(0.0, 2.0), {x0}, kappa, r);
}

// ---- stability --------------------------------------------------------------

enum class StabilityField { b, b_plus_f_centered };

struct StabilityReport {
    std::size_t starts = 0;
    std::size_t escapes = 0;
    std::vector<Vector> start_points;
    std::vector<double> escape_time; // NaN when the flow stayed inside
    bool stable() const { return escapes == 0; }
};

inline StabilityReport stability_probe(const ExitScenario& s, StabilityField field, std::size_t n_starts,
                                       double t_max, double dt) {
    static constexpr unsigned primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
    const auto& m = s.model.base;
    const std::size_t d = m.dim;
    auto [lo, hi] = s.inner.probe_box(5.0);
    StabilityReport rep;
    for (std::uint64_t i = 1; rep.start_points.size() < n_starts && i < 64 * (n_starts + 1); ++i) {
        Vector p(d);
        for (std::size_t k = 0; k < d; ++k) p[k] = lo[k] + (hi[k] - lo[k]) * radical_inverse(i, primes[k % 16]);
        if (s.inner.contains_open(p)) rep.start_points.push_back(std::move(p));
    }
    rep.starts = rep.start_points.size();
    const auto K = static_cast<std::uint64_t>(std::llround(t_max / dt));
    Vector u(d), fv(d), y(d);
    for (const auto& p0 : rep.start_points) {
        Vector x = p0;
        double esc = std::numeric_limits<double>::quiet_NaN();
        for (std::uint64_t k = 0; k < K; ++k) {
            const double t = static_cast<double>(k) * dt;
            m.drift(t, x, u);
            if (field == StabilityField::b_plus_f_centered && !m.zero_kernel) {
                for (std::size_t c = 0; c < d; ++c) y[c] = x[c] - s.x_tilde()[c];
                m.kernel(y, fv);
                for (std::size_t c = 0; c < d; ++c) u[c] += fv[c];
            }
            for (std::size_t c = 0; c < d; ++c) x[c] += u[c] * dt;
            if (!s.inner.contains_open(x)) {
                esc = static_cast<double>(k + 1) * dt;
                break;
            }
        }
        if (!std::isnan(esc)) ++rep.escapes;
        rep.escape_time.push_back(esc);
    }
    return rep;
}

// ---- particle run with moment clock and exit tracking ------------------------

struct ExitOptions {
    double dt = 5e-4;
    std::size_t paths = 1024; // particles evolving jointly
    double t_cap = 100.0;
    std::uint64_t seed = 0;
    int workers = 1;
    InteractionMethod method = InteractionMethod::automatic;
    std::optional<bool> taming;
    VectorField frozen;        // when set, the interaction is frozen to this field
    std::size_t xi_stride = 0; // keep every xi_stride-th xi value (0: about 2000 values)
};

struct BoundReport {
    bool hypothesis = false; // eps < kappa^2 L / (d (r - 1))
    double sup_xi = 0.0;
    double sup_xi_stderr = 0.0;
    double bound_sup = 0.0;  // max{|x0 - x~|^r, (d eps (r-1) / (2L))^{r/2}}
    double margin_sup = 0.0; // bound * (1 + 3 stderr) - sup; negative = violated
    bool pass_sup = false;
    bool clock_applicable = false; // |x0 - x~|^2 > kappa^2 / 2
    double bound_clock = kInf;     // (1/(rL)) log(2 |x0 - x~|^2 / kappa^2 - 1)
    double margin_clock = 0.0;
    bool pass_clock = true;

    nlohmann::json to_json() const {
        return {{"hypothesis", hypothesis},       {"sup_xi", sup_xi},
                {"sup_xi_stderr", sup_xi_stderr}, {"bound_sup", bound_sup},
                {"margin_sup", margin_sup},       {"pass_sup", pass_sup},
                {"clock_applicable", clock_applicable},
                {"bound_clock", std::isfinite(bound_clock) ? nlohmann::json(bound_clock) : nlohmann::json("inf")},
                {"margin_clock", margin_clock},   {"pass_clock", pass_clock}};
    }
};

struct MomentClock {
    std::vector<double> times, xi, xi_stderr; // strided
    std::optional<double> t_hat;              // first grid time with xi <= kappa^r
    double sup_xi = 0.0, sup_xi_stderr = 0.0;
    BoundReport bounds;
    StepStats stats; // set by moment_clock; exit runs report theirs in ExitRun
};

struct ExitRun {
    double epsilon = 0.0;
    std::vector<double> tau;    // per particle; t_cap when censored
    std::vector<char> censored; // per particle
    std::size_t censored_count = 0;
    double mean_tau = 0.0, stderr_tau = 0.0;
    MomentClock clock;
    double pre_convergence_fraction = 0.0; // P[tau < T^hat]
    bool too_small_for_budget = false;     // more than half censored
    StepStats stats;
    double final_time = 0.0;
};

namespace detail {

inline BoundReport moment_bounds(const ExitScenario& s, double eps, const MomentClock& mc) {
    const std::size_t d = s.model.base.dim;
    const double r = s.r, L = s.L(), kappa = s.kappa;
    const double dist0 = dist(s.x0, s.x_tilde());
    BoundReport b;
    b.hypothesis = eps < kappa * kappa * L / (static_cast<double>(d) * (r - 1.0));
    b.sup_xi = mc.sup_xi;
    b.sup_xi_stderr = mc.sup_xi_stderr;
    b.bound_sup = std::max(std::pow(dist0, r),
                           std::pow(static_cast<double>(d) * eps * (r - 1.0) / (2.0 * L), r / 2.0));
    const double allowed = b.bound_sup * (1.0 + 3.0 * mc.sup_xi_stderr);
    b.margin_sup = allowed - mc.sup_xi;
    b.pass_sup = mc.sup_xi <= allowed;
    b.clock_applicable = dist0 * dist0 > kappa * kappa / 2.0;
    if (b.clock_applicable) {
        b.bound_clock = std::log(2.0 * dist0 * dist0 / (kappa * kappa) - 1.0) / (r * L);
        b.pass_clock = mc.t_hat && *mc.t_hat <= b.bound_clock;
        b.margin_clock = mc.t_hat ? b.bound_clock - *mc.t_hat : -kInf;
    }
    return b;
}

// Steps the particle system, updating xi at every grid time. `on_step` is
// called after each observation and returns false to stop.
template <class OnStep>
inline StepStats run_clocked(const ExitScenario& s, double eps, const ExitOptions& o, ParticleCloud& c,
                             MomentClock& mc, OnStep&& on_step) {
    const auto& m = s.model.base;
    StepOptions so;
    so.dt = o.dt;
    so.epsilon = eps;
    so.seed = o.seed;
    so.method = o.method;
    so.taming = o.taming.value_or(m.growth_order >= 3.0);
    so.workers = o.workers;
    if (o.frozen) {
        so.mode = InteractionMode::frozen_field;
        so.frozen = o.frozen;
    }
    ReflectedStepper stepper(m, s.outer, so);
    const auto K = static_cast<std::uint64_t>(std::llround(o.t_cap / o.dt));
    const std::uint64_t stride = o.xi_stride ? o.xi_stride : std::max<std::uint64_t>(1, K / 2000);
    const double kr = std::pow(s.kappa, s.r);
    std::vector<double> vals(c.n);
    StepStats stats;
    for (;;) {
        for (std::size_t i = 0; i < c.n; ++i) {
            const double dd = dist(c.particle(i), s.x_tilde());
            vals[i] = s.r == 2.0 ? dd * dd : std::pow(dd, s.r);
        }
        const auto ms = mean_stderr(vals);
        if (c.step == 0 || ms.mean > mc.sup_xi) {
            mc.sup_xi = ms.mean;
            mc.sup_xi_stderr = ms.stderr_;
        }
        if (!mc.t_hat && ms.mean <= kr) mc.t_hat = c.time;
        if (c.step % stride == 0) {
            mc.times.push_back(c.time);
            mc.xi.push_back(ms.mean);
            mc.xi_stderr.push_back(ms.stderr_);
        }
        if (!on_step(c) || c.step >= K) break;
        stats += stepper.step(c);
    }
    return stats;
}

} // namespace detail

// Monte Carlo moment clock over [0, t_end] with the bound report.
inline MomentClock moment_clock(const ExitScenario& s, double eps, double t_end, const ExitOptions& opts) {
    ExitOptions o = opts;
    o.t_cap = t_end;
    ParticleCloud c = ParticleCloud::at_point(o.paths, s.x0);
    MomentClock mc;
    mc.stats = detail::run_clocked(s, eps, o, c, mc, [](const ParticleCloud&) { return true; });
    mc.bounds = detail::moment_bounds(s, eps, mc);
    return mc;
}

// First grid time each particle is outside the open exit domain. Runs until
// every particle has exited and the clock has fired, or t_cap.
inline ExitRun exit_time_mc(const ExitScenario& s, double eps, const ExitOptions& o) {
    if (!(o.t_cap > 0.0) || !std::isfinite(o.t_cap)) throw ConfigError("t_cap must be finite and positive");
    if (o.paths < 1) throw ConfigError("paths must be >= 1");
    ExitRun run;
    run.epsilon = eps;
    run.tau.assign(o.paths, o.t_cap);
    run.censored.assign(o.paths, 1);
    std::size_t remaining = o.paths;
    ParticleCloud c = ParticleCloud::at_point(o.paths, s.x0);
    run.stats = detail::run_clocked(s, eps, o, c, run.clock, [&](const ParticleCloud& cl) {
        for (std::size_t i = 0; i < cl.n; ++i) {
            if (run.censored[i] && !s.inner.contains_open(cl.particle(i))) {
                run.censored[i] = 0;
                run.tau[i] = cl.time;
                --remaining;
            }
        }
        run.final_time = cl.time;
        return remaining > 0 || !run.clock.t_hat;
    });
    run.clock.bounds = detail::moment_bounds(s, eps, run.clock);
    run.censored_count = remaining;
    const auto ms = mean_stderr(run.tau);
    run.mean_tau = ms.mean;
    run.stderr_tau = ms.stderr_;
    const double t_hat = run.clock.t_hat.value_or(kInf);
    std::size_t early = 0;
    for (std::size_t i = 0; i < o.paths; ++i) early += !run.censored[i] && run.tau[i] < t_hat;
    run.pre_convergence_fraction = static_cast<double>(early) / static_cast<double>(o.paths);
    run.too_small_for_budget = 2 * remaining > o.paths;
    return run;
}

// ---- coupling -----------------------------------------------------------------

// eta(kappa) = sup_{nu in ball} sup_{x in compact} (|f*nu(x) - f(x - x~)| / L)^{2/3}
// maximised over two-point candidate measures
//   nu = (1 - p) delta_{x~} + p delta_{x~ + a u},  p = min(1, (kappa / a)^r)
//   nu = (delta_{x~ + a u} + delta_{x~ - a u}) / 2, a <= kappa
// supported in the reflecting domain. A lower bound for the true sup.
inline double eta_kappa(const ExitScenario& s, double kappa) {
    const auto& m = s.model.base;
    const std::size_t d = m.dim;
    if (m.zero_kernel) return 0.0;
    const Vector& xt = s.x_tilde();
    std::vector<Vector> xs = detail::boundary_points(s.compact, xt, 64);
    xs.push_back(xt);
    const double span = detail::diameter_proxy(s.outer);
    std::vector<Vector> dirs = detail::directions(d, 16);
    Vector u(d), f1(d), f2(d), f0(d), y(d), atom(d), atom2(d);
    double best = 0.0;
    auto consider = [&](const std::vector<std::pair<double, Vector>>& nu) {
        for (const auto& x : xs) {
            std::fill(u.begin(), u.end(), 0.0);
            for (const auto& [w, a] : nu) {
                for (std::size_t k = 0; k < d; ++k) y[k] = x[k] - a[k];
                m.kernel(y, f1);
                for (std::size_t k = 0; k < d; ++k) u[k] += w * f1[k];
            }
            for (std::size_t k = 0; k < d; ++k) y[k] = x[k] - xt[k];
            m.kernel(y, f0);
            for (std::size_t k = 0; k < d; ++k) u[k] -= f0[k];
            best = std::max(best, std::pow(norm(u) / s.L(), 2.0 / 3.0));
        }
    };
    for (const auto& dir : dirs) {
        for (double a = kappa / 64.0; a <= span; a *= 1.25) {
            for (std::size_t k = 0; k < d; ++k) {
                atom[k] = xt[k] + a * dir[k];
                atom2[k] = xt[k] - a * dir[k];
            }
            if (s.outer.contains(atom, 0.0)) {
                const double p = std::min(1.0, std::pow(kappa / a, s.r));
                consider({{1.0 - p, xt}, {p, atom}});
            }
            if (a <= kappa && s.outer.contains(atom, 0.0) && s.outer.contains(atom2, 0.0))
                consider({{0.5, atom}, {0.5, atom2}});
        }
    }
    return best;
}

struct CouplingOptions {
    ExitOptions run;            // dt, paths, t_cap (horizon), seed, workers
    std::optional<double> eta;  // user threshold for the exceedance probability
};

struct CouplingResult {
    std::optional<double> t_hat;
    std::size_t coupled = 0;   // particles with X(T^hat) in the compact set
    std::size_t censored = 0;  // coupled particles still in the compact set at the horizon
    double mean_sup_gap2 = 0.0, stderr_sup_gap2 = 0.0;
    double eta_kappa = 0.0;
    double prob_exceed_eta_kappa = 0.0; // P[sup |Z - X| >= eta(kappa)]
    std::optional<double> prob_exceed_user;
    StepStats stats;
};

// From T^hat on, Z follows b(Z) + f(Z - x~) with the same noise increments as
// X; the gap is tracked until either leaves the compact set.
inline CouplingResult coupling_gap(const ExitScenario& s, double eps, const CouplingOptions& co) {
    const auto& o = co.run;
    const auto& m = s.model.base;
    const std::size_t d = m.dim;
    CouplingResult res;
    res.eta_kappa = eta_kappa(s, s.kappa);

    ParticleCloud x = ParticleCloud::at_point(o.paths, s.x0);
    MomentClock mc;
    // Run X until the clock fires.
    res.stats += detail::run_clocked(s, eps, o, x, mc, [&](const ParticleCloud&) { return !mc.t_hat; });
    res.t_hat = mc.t_hat;
    std::vector<double> sup_gap2(o.paths, 0.0);
    if (!mc.t_hat) {
        res.censored = 0;
    } else {
        StepOptions sx;
        sx.dt = o.dt;
        sx.epsilon = eps;
        sx.seed = o.seed;
        sx.method = o.method;
        sx.taming = o.taming.value_or(m.growth_order >= 3.0);
        sx.workers = o.workers;
        StepOptions sz = sx;
        const Vector xt = s.x_tilde();
        sz.mode = InteractionMode::frozen_field;
        sz.frozen = [&m, xt, d](double, std::span<const double> z, std::span<double> out) {
            double y[16];
            for (std::size_t k = 0; k < d; ++k) y[k] = z[k] - xt[k];
            m.kernel(std::span<const double>(y, d), out);
        };
        ReflectedStepper stx(m, s.outer, sx), stz(m, s.outer, sz);
        ParticleCloud z = x;
        std::vector<char> active(o.paths, 0);
        std::size_t n_active = 0;
        for (std::size_t i = 0; i < o.paths; ++i)
            if (s.compact.contains(x.particle(i), 0.0)) {
                active[i] = 1;
                ++n_active;
            }
        res.coupled = n_active;
        const auto K = static_cast<std::uint64_t>(std::llround(o.t_cap / o.dt));
        while (n_active > 0 && x.step < K) {
            res.stats += stx.step(x);
            res.stats += stz.step(z);
            for (std::size_t i = 0; i < o.paths; ++i) {
                if (!active[i]) continue;
                sup_gap2[i] = std::max(sup_gap2[i], dist2(x.particle(i), z.particle(i)));
                if (!s.compact.contains(x.particle(i), 0.0) || !s.compact.contains(z.particle(i), 0.0)) {
                    active[i] = 0;
                    --n_active;
                }
            }
        }
        res.censored = n_active;
    }
    const auto ms = mean_stderr(sup_gap2);
    res.mean_sup_gap2 = ms.mean;
    res.stderr_sup_gap2 = ms.stderr_;
    auto exceed = [&](double eta) {
        std::size_t n = 0;
        for (double g2 : sup_gap2) n += std::sqrt(g2) >= eta;
        return static_cast<double>(n) / static_cast<double>(o.paths);
    };
    res.prob_exceed_eta_kappa = res.eta_kappa > 0.0 ? exceed(res.eta_kappa) : 0.0;
    if (co.eta) res.prob_exceed_user = exceed(*co.eta);
    return res;
}

// ---- exit cost ------------------------------------------------------------------

enum class CostConvention { paper, classical };

struct ExitCost {
    double value = 0.0;
    Vector argmin;
};

// paper:     inf_{z on boundary} B(z) + F(z - x~) - B(x~)
// classical: inf_{z on boundary} B(x~) - B(z) + F(z - x~)
inline ExitCost exit_cost(const ExitScenario& s, CostConvention conv) {
    const auto& m = s.model.base;
    if (!m.drift_potential || !m.kernel_potential) throw ConfigError("exit cost needs both potentials B and F");
    const std::size_t d = m.dim;
    const Vector& xt = s.x_tilde();
    const double Bt = m.drift_potential(xt);
    Vector y(d);
    auto cost = [&](std::span<const double> z) {
        for (std::size_t k = 0; k < d; ++k) y[k] = z[k] - xt[k];
        const double Bz = m.drift_potential(z), Fz = m.kernel_potential(y);
        return conv == CostConvention::paper ? Bz + Fz - Bt : Bt - Bz + Fz;
    };
    const std::size_t count = d == 1 ? 2 : 4096;
    const auto dirs = detail::directions(d, count);
    ExitCost best{kInf, {}};
    std::size_t best_dir = 0;
    for (std::size_t j = 0; j < dirs.size(); ++j) {
        const double sr = detail::ray_exit(s.inner, xt, dirs[j]);
        if (!std::isfinite(sr)) continue;
        Vector z(d);
        for (std::size_t k = 0; k < d; ++k) z[k] = xt[k] + sr * dirs[j][k];
        const double v = cost(z);
        if (std::isnan(v) || v == -kInf) throw NumericalError("exit cost unbounded below on the boundary");
        if (v < best.value) {
            best = {v, z};
            best_dir = j;
        }
    }
    if (best.argmin.empty()) throw ConfigError("exit domain has no boundary reachable from x_tilde");
    if (d == 2) {
        // Golden-section refinement of the angle around the best walk point.
        const double h = 2.0 * std::numbers::pi / static_cast<double>(count);
        const double a0 = h * static_cast<double>(best_dir);
        auto at = [&](double ang, Vector& z) {
            const Vector u{std::cos(ang), std::sin(ang)};
            const double sr = detail::ray_exit(s.inner, xt, u);
            z = {xt[0] + sr * u[0], xt[1] + sr * u[1]};
            return std::isfinite(sr) ? cost(z) : kInf;
        };
        const double g = (std::sqrt(5.0) - 1.0) / 2.0;
        double lo = a0 - h, hi = a0 + h;
        Vector z1, z2;
        double c = hi - g * (hi - lo), e = lo + g * (hi - lo);
        double fc = at(c, z1), fe = at(e, z2);
        for (int it = 0; it < 80; ++it) {
            if (fc < fe) {
                hi = e;
                e = c;
                fe = fc;
                c = hi - g * (hi - lo);
                fc = at(c, z1);
            } else {
                lo = c;
                c = e;
                fc = fe;
                e = lo + g * (hi - lo);
                fe = at(e, z2);
            }
        }
        Vector z;
        const double v = at(0.5 * (lo + hi), z);
        if (v < best.value) best = {v, z};
    }
    return best;
}

// ---- Kramers fit -------------------------------------------------------------------

struct KramersPoint {
    double epsilon = 0.0;
    double mean_tau = 0.0;
    double stderr_tau = 0.0;
    double censored_fraction = 0.0;
};

struct KramersFit {
    LinearFit fit; // log(mean tau) = intercept + slope / eps
    double ci_low = 0.0, ci_high = 0.0;
    std::vector<double> used_eps;
    std::vector<std::string> warnings;
};

inline KramersFit kramers_fit(const std::vector<KramersPoint>& pts) {
    KramersFit out;
    std::vector<double> x, y;
    for (const auto& p : pts) {
        if (p.censored_fraction >= 0.1) {
            out.warnings.push_back("epsilon " + std::to_string(p.epsilon) + " excluded: censored fraction " +
                                   std::to_string(p.censored_fraction));
            continue;
        }
        if (!(p.mean_tau > 0.0) || !(p.epsilon > 0.0)) {
            out.warnings.push_back("epsilon " + std::to_string(p.epsilon) + " excluded: nonpositive value");
            continue;
        }
        x.push_back(1.0 / p.epsilon);
        y.push_back(std::log(p.mean_tau));
        out.used_eps.push_back(p.epsilon);
    }
    if (x.size() < 3) throw Error("Kramers fit needs at least three usable epsilon values");
    out.fit = least_squares(x, y);
    const double t = t_quantile_975(x.size() - 2);
    out.ci_low = out.fit.slope - t * out.fit.slope_stderr;
    out.ci_high = out.fit.slope + t * out.fit.slope_stderr;
    return out;
}

inline KramersPoint to_kramers_point(const ExitRun& r) {
    return {r.epsilon, r.mean_tau, r.stderr_tau,
            static_cast<double>(r.censored_count) / static_cast<double>(r.tau.size())};
}

} // namespace rmv
