#pragma once

// Decoupled construction of the mean-field limit.
//
// A g-function is either an explicit field or an empirical one: the Monte
// Carlo image Gamma[g](t, x) = (1/M) sum_m f(x - X_t^(m)) of M copies of the
// equation driven by the frozen interaction g. Evaluation uses the stored
// cloud at the nearest grid time. With a polynomial kernel the average is
// evaluated exactly from moments of the full cloud; otherwise from the
// thinned stored cloud.
//
// The fixed-point iteration reuses one noise seed for every application of
// Gamma (common random numbers), so successive distances measure the map
// itself rather than fresh Monte Carlo noise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "engine.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "interaction.hpp"
#include "model.hpp"
#include "recorder.hpp"
#include "vecmath.hpp"

namespace rmv {

struct ProbePoint {
    double t = 0.0;
    Vector x;
};

class GFunction {
public:
    enum class Kind { zero, explicit_field, empirical };

    struct Empirical {
        double dt = 0.0;
        std::size_t dim = 0;
        KernelField kernel;
        std::vector<std::vector<double>> clouds; // per grid node, thinned, n_k x dim
        std::vector<MomentExpansion> expansions; // per grid node, from the full cloud (optional)
        std::size_t full_size = 0;
    };

    GFunction() = default;

    static GFunction zero(std::size_t dim) {
        GFunction g;
        g.kind_ = Kind::zero;
        g.dim_ = dim;
        return g;
    }

    static GFunction from_field(std::size_t dim, VectorField f) {
        GFunction g;
        g.kind_ = Kind::explicit_field;
        g.dim_ = dim;
        g.field_ = std::move(f);
        return g;
    }

    static GFunction from_empirical(Empirical e) {
        if (e.clouds.empty()) throw Error("empirical g needs at least one cloud");
        GFunction g;
        g.kind_ = Kind::empirical;
        g.dim_ = e.dim;
        g.emp_ = std::make_shared<const Empirical>(std::move(e));
        return g;
    }

    Kind kind() const { return kind_; }
    std::size_t dim() const { return dim_; }
    const Empirical* empirical() const { return emp_.get(); }

    std::size_t node_index(double t) const {
        const auto& e = *emp_;
        const double k = std::llround(std::max(0.0, t) / e.dt);
        return std::min(static_cast<std::size_t>(k), e.clouds.size() - 1);
    }

    void operator()(double t, std::span<const double> x, std::span<double> out) const {
        switch (kind_) {
        case Kind::zero: std::fill(out.begin(), out.end(), 0.0); return;
        case Kind::explicit_field: field_(t, x, out); return;
        case Kind::empirical: break;
        }
        const auto& e = *emp_;
        const std::size_t k = node_index(t);
        if (!e.expansions.empty()) {
            e.expansions[k].evaluate(x, out);
            return;
        }
        const auto& cloud = e.clouds[k];
        const std::size_t d = dim_, n = cloud.size() / d;
        std::vector<double> vals(n * d), u(d), fu(d);
        for (std::size_t m = 0; m < n; ++m) {
            for (std::size_t c = 0; c < d; ++c) u[c] = x[c] - cloud[m * d + c];
            e.kernel(u, fu);
            for (std::size_t c = 0; c < d; ++c) vals[c * n + m] = fu[c];
        }
        for (std::size_t c = 0; c < d; ++c)
            out[c] = pairwise_sum(std::span<const double>(vals).subspan(c * n, n)) / static_cast<double>(n);
    }

    VectorField field() const {
        GFunction self = *this;
        return [self](double t, std::span<const double> x, std::span<double> out) { self(t, x, out); };
    }

private:
    Kind kind_ = Kind::zero;
    std::size_t dim_ = 0;
    VectorField field_;
    std::shared_ptr<const Empirical> emp_;
};

// max over probes of |g(t,x)| / (1 + |x - x0|^r)
inline double gnorm(const GFunction& g, const std::vector<ProbePoint>& probes, double r, std::span<const double> x0) {
    if (probes.empty()) throw Error("gnorm needs at least one probe");
    Vector v(g.dim());
    double best = 0.0;
    for (const auto& p : probes) {
        g(p.t, p.x, v);
        if (!all_finite(v)) throw NumericalError("non-finite g value at t=" + std::to_string(p.t));
        best = std::max(best, norm(v) / (1.0 + std::pow(dist(p.x, x0), r)));
    }
    return best;
}

// Weighted sup distance between two g-functions on the same probes.
inline double gdistance(const GFunction& a, const GFunction& b, const std::vector<ProbePoint>& probes, double r,
                        std::span<const double> x0) {
    const GFunction diff = GFunction::from_field(a.dim(), [&](double t, std::span<const double> x, std::span<double> out) {
        Vector vb(out.size());
        a(t, x, out);
        b(t, x, vb);
        for (std::size_t k = 0; k < out.size(); ++k) out[k] -= vb[k];
    });
    return gnorm(diff, probes, r, x0);
}

inline double radical_inverse(std::uint64_t i, unsigned base) {
    double inv = 1.0 / base, f = inv, r = 0.0;
    while (i) {
        r += f * static_cast<double>(i % base);
        i /= base;
        f *= inv;
    }
    return r;
}

// Time nodes (at most max_nodes, evenly strided over the grid) crossed with
// {x_tilde, x0, box corners, n_halton quasi-random points}. Points outside
// the domain are projected into it.
inline std::vector<ProbePoint> make_probe_grid(const ConvexDomain& domain, std::span<const double> x0,
                                               const std::optional<Vector>& x_tilde, double T, double dt,
                                               std::size_t max_nodes = 101, std::size_t n_halton = 32) {
    static constexpr unsigned primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
    const std::size_t d = domain.dimension();
    if (d > 16) throw ConfigError("probe grid supports at most 16 dimensions");
    auto [lo, hi] = domain.probe_box(5.0);

    std::vector<Vector> pts;
    if (x_tilde) pts.push_back(*x_tilde);
    pts.emplace_back(x0.begin(), x0.end());
    for (std::size_t mask = 0; mask < (std::size_t{1} << std::min<std::size_t>(d, 10)); ++mask) {
        Vector c(d);
        for (std::size_t k = 0; k < d; ++k) c[k] = (mask >> k) & 1 ? hi[k] : lo[k];
        pts.push_back(std::move(c));
    }
    for (std::size_t i = 1; i <= n_halton; ++i) {
        Vector c(d);
        for (std::size_t k = 0; k < d; ++k) c[k] = lo[k] + (hi[k] - lo[k]) * radical_inverse(i, primes[k]);
        pts.push_back(std::move(c));
    }
    for (auto& p : pts)
        if (!domain.contains(p, 0.0)) p = domain.project(p).projected_point;

    const auto K = static_cast<std::uint64_t>(std::llround(T / dt));
    const std::uint64_t nodes = std::min<std::uint64_t>(K + 1, std::max<std::size_t>(max_nodes, 2));
    std::vector<ProbePoint> out;
    for (std::uint64_t j = 0; j < nodes; ++j) {
        const std::uint64_t k = nodes == 1 ? 0 : (j * K) / (nodes - 1);
        for (const auto& p : pts) out.push_back({static_cast<double>(k) * dt, p});
    }
    return out;
}

struct GammaOptions {
    std::size_t M = 1024;
    double dt = 1e-3;
    double T = 1.0;
    double epsilon = 1.0;
    std::uint64_t seed = 0;
    std::size_t store_limit = 1024;
    std::vector<double> full_snapshot_times; // also keep the full cloud here
    InteractionMethod method = InteractionMethod::automatic;
    std::optional<bool> taming;
    double taming_cap = 1.0;
    int workers = 1;
    std::optional<Vector> x0;
};

struct GammaResult {
    GFunction g;
    std::vector<Snapshot> full; // at full_snapshot_times (grid-snapped)
    StepStats stats;
};

// Simulates M copies of the equation with interaction frozen to g and
// returns the empirical convolution of f with their law.
inline GammaResult gamma_apply(const GFunction& g, const ModelCoefficients& model, const ConvexDomain& domain,
                               const GammaOptions& o) {
    if (o.M < 2) throw ConfigError("gamma_apply needs M >= 2");
    if (!(o.dt > 0.0) || !(o.T > 0.0)) throw ConfigError("dt and T must be positive");
    if (o.store_limit < 1) throw ConfigError("store_limit must be >= 1");
    require_dim(g.dim(), model.dim, "g");
    const Vector x0 = o.x0 ? *o.x0 : model.x0;
    if (!domain.contains(x0, 0.0)) throw ConfigError("x0 lies outside the domain");

    StepOptions so;
    so.dt = o.dt;
    so.epsilon = o.epsilon;
    so.seed = o.seed;
    so.mode = InteractionMode::frozen_field;
    so.frozen = g.field();
    so.method = o.method;
    so.taming = o.taming.value_or(model.growth_order >= 3.0);
    so.taming_cap = o.taming_cap;
    so.workers = o.workers;
    ReflectedStepper stepper(model, domain, so);

    const std::uint64_t K = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(o.T / o.dt)));
    const auto full_steps = snap_to_grid(o.full_snapshot_times, o.dt, K);
    const std::size_t d = model.dim;
    const std::size_t keep = std::min(o.store_limit, o.M);
    const bool moments = model.polynomial && !model.zero_kernel && d <= 16;

    GFunction::Empirical e;
    e.dt = o.dt;
    e.dim = d;
    e.kernel = model.kernel;
    e.full_size = o.M;
    e.clouds.reserve(K + 1);
    std::optional<MomentExpansion> proto;
    if (moments) proto.emplace(model.polynomial->kernel);

    GammaResult res;
    ParticleCloud c = ParticleCloud::at_point(o.M, x0);
    std::size_t next_full = 0;
    auto store = [&]() {
        std::vector<double> thin(keep * d);
        for (std::size_t j = 0; j < keep; ++j) {
            const std::size_t src = (2 * j + 1) * o.M / (2 * keep); // evenly strided; particles are exchangeable
            std::copy_n(&c.positions[src * d], d, &thin[j * d]);
        }
        e.clouds.push_back(std::move(thin));
        if (proto) {
            MomentExpansion ex = *proto;
            ex.fit(c.positions, c.n);
            e.expansions.push_back(std::move(ex));
        }
        if (next_full < full_steps.size() && full_steps[next_full] == c.step) {
            res.full.push_back({c.time, d, c.positions, c.local_time_magnitude});
            ++next_full;
        }
    };
    store();
    for (std::uint64_t k = 0; k < K; ++k) {
        res.stats += stepper.step(c);
        store();
    }
    res.g = GFunction::from_empirical(std::move(e));
    return res;
}

struct FixedPointOptions {
    GammaOptions gamma;
    double tol = 1e-2;
    std::size_t max_iter = 30;
    std::size_t probe_time_nodes = 101;
    std::optional<Vector> x_tilde; // added to the probe grid when known
    bool throw_on_failure = true;
};

struct IterationRecord {
    std::size_t iteration = 0;
    double distance = 0.0;
    double wall_seconds = 0.0;
};

struct FixedPointResult {
    GFunction g;                 // last iterate Gamma[g_{k}]
    std::vector<Snapshot> law;   // full clouds of the last application
    std::vector<IterationRecord> history;
    bool converged = false;
    StepStats stats;

    nlohmann::json diagnostics() const {
        nlohmann::json j = {{"converged", converged}, {"iterations", history.size()}};
        j["history"] = nlohmann::json::array();
        for (const auto& h : history)
            j["history"].push_back({{"iteration", h.iteration}, {"distance", h.distance}, {"wall_seconds", h.wall_seconds}});
        return j;
    }
};

// g_0 = 0, g_{k+1} = Gamma[g_k] until the weighted sup distance on the probe
// grid drops below tol.
inline FixedPointResult fixed_point(const ModelCoefficients& model, const ConvexDomain& domain,
                                    const FixedPointOptions& o) {
    if (!(o.tol > 0.0)) throw ConfigError("fixed point tolerance must be positive");
    if (o.max_iter < 1) throw ConfigError("max_iter must be >= 1");
    const Vector x0 = o.gamma.x0 ? *o.gamma.x0 : model.x0;
    const auto probes = make_probe_grid(domain, x0, o.x_tilde, o.gamma.T, o.gamma.dt, o.probe_time_nodes);

    FixedPointResult res;
    GFunction g = GFunction::zero(model.dim);
    for (std::size_t it = 1; it <= o.max_iter; ++it) {
        const auto start = std::chrono::steady_clock::now();
        GammaResult gr = gamma_apply(g, model, domain, o.gamma);
        const double dist_k = gdistance(gr.g, g, probes, model.growth_order, x0);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        res.history.push_back({it, dist_k, wall});
        res.stats += gr.stats;
        g = gr.g;
        res.g = gr.g;
        res.law = std::move(gr.full);
        if (dist_k < o.tol) {
            res.converged = true;
            return res;
        }
    }
    if (o.throw_on_failure) {
        std::ostringstream os;
        os << "fixed point did not reach tol " << o.tol << " in " << o.max_iter << " iterations; distances:";
        for (const auto& h : res.history) os << ' ' << h.distance;
        throw ConvergenceError(os.str(), res.history.back().distance);
    }
    return res;
}

} // namespace rmv
