#pragma once

// Projected Euler-Maruyama for the reflected interacting particle system
//
//   raw_i  = x_i + [b(t, x_i) + (f * mu^N_t)(x_i)] dt + sqrt(eps dt) sigma(t, x_i) xi_i
//   x_i'   = P_D(raw_i),   k_i += raw_i - x_i',   |k|_i += |raw_i - x_i'|
//
// The projection keeps every particle in D exactly and pushes only when the
// raw point left D. The interaction can also be frozen to a given field g(t,x)
// (the decoupled equation used by the mean-field fixed point) or switched off.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "interaction.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "vecmath.hpp"

namespace rmv {

struct ParticleCloud {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::vector<double> positions;            // n x dim
    std::vector<double> local_time_magnitude; // n
    std::vector<double> local_time_vector;    // n x dim
    double time = 0.0;
    std::uint64_t step = 0;

    static ParticleCloud at_point(std::size_t n, std::span<const double> x0) {
        ParticleCloud c;
        c.n = n;
        c.dim = x0.size();
        c.positions.resize(n * c.dim);
        for (std::size_t i = 0; i < n; ++i) std::copy(x0.begin(), x0.end(), c.positions.begin() + i * c.dim);
        c.local_time_magnitude.assign(n, 0.0);
        c.local_time_vector.assign(n * c.dim, 0.0);
        return c;
    }

    static ParticleCloud from_positions(std::vector<double> pos, std::size_t dim) {
        ParticleCloud c;
        c.dim = dim;
        c.n = pos.size() / dim;
        c.positions = std::move(pos);
        c.local_time_magnitude.assign(c.n, 0.0);
        c.local_time_vector.assign(c.n * dim, 0.0);
        return c;
    }

    std::span<const double> particle(std::size_t i) const { return {positions.data() + i * dim, dim}; }
};

enum class InteractionMode { particle_mean, frozen_field, none };

inline const char* to_string(InteractionMode m) {
    switch (m) {
    case InteractionMode::particle_mean: return "particle_mean";
    case InteractionMode::frozen_field: return "frozen_g";
    case InteractionMode::none: return "none";
    }
    return "?";
}

struct StepOptions {
    double dt = 1e-3;
    double epsilon = 1.0;
    std::uint64_t seed = 0;
    InteractionMode mode = InteractionMode::particle_mean;
    VectorField frozen;  // used when mode == frozen_field
    InteractionMethod method = InteractionMethod::automatic;
    bool taming = false; // cap |drift| dt at taming_cap * sqrt(dt)
    double taming_cap = 1.0;
    int workers = 1;
    std::uint64_t particle_offset = 0; // added to the particle index for noise keys
};

struct StepStats {
    std::uint64_t steps = 0;
    std::uint64_t particle_steps = 0;
    std::uint64_t pushes = 0;                    // raw point was exterior
    std::uint64_t exterior_states = 0;           // post-projection point outside D (must stay 0)
    std::uint64_t interior_local_time_growth = 0; // |k| grew on an interior raw point (must stay 0)
    std::uint64_t tamed = 0;

    StepStats& operator+=(const StepStats& o) {
        steps += o.steps;
        particle_steps += o.particle_steps;
        pushes += o.pushes;
        exterior_states += o.exterior_states;
        interior_local_time_growth += o.interior_local_time_growth;
        tamed += o.tamed;
        return *this;
    }
};

// Owns scratch buffers and the interaction evaluator; one step per call.
class ReflectedStepper {
public:
    ReflectedStepper(const ModelCoefficients& model, const ConvexDomain& domain, StepOptions opts)
        : model_(model), domain_(domain), opts_(std::move(opts)), noise_(opts_.seed, stream_tag::particle_noise),
          interaction_(model, opts_.method) {
        if (!(opts_.dt > 0.0)) throw ConfigError("dt must be positive");
        if (opts_.epsilon < 0.0) throw ConfigError("epsilon must be nonnegative");
        require_dim(domain.dimension(), model.dim, "stepper domain");
        if (model.dim > 16 || model.noise_dim > 16) throw ConfigError("stepper supports at most 16 dimensions");
        if (opts_.mode == InteractionMode::frozen_field && !opts_.frozen)
            throw ConfigError("frozen interaction needs a field");
        skip_interaction_ = opts_.mode == InteractionMode::none ||
                            (opts_.mode == InteractionMode::particle_mean && model.zero_kernel);
    }

    const StepOptions& options() const { return opts_; }
    bool uses_moments() const { return interaction_.uses_moments(); }

    // Interaction evaluated at the current positions (for diagnostics).
    void interaction_at_particles(const ParticleCloud& c, std::span<double> out) {
        compute_interaction(c, out);
    }

    StepStats step(ParticleCloud& c) {
        const std::size_t n = c.n, d = c.dim, dn = model_.noise_dim;
        require_dim(d, model_.dim, "cloud");
        const double dt = opts_.dt, t = c.time;
        const double noise_scale = std::sqrt(opts_.epsilon * dt);
        const bool noisy = opts_.epsilon > 0.0;

        force_.resize(n * d);
        if (skip_interaction_) std::fill(force_.begin(), force_.end(), 0.0);
        else compute_interaction(c, force_);

        status_.assign(n, 0);
        flags_.assign(n, 0);
        const std::uint64_t step = c.step;
        parallel_for(n, opts_.workers, [&](std::size_t i) {
            double buf[3 * 16 + 16 * 16 + 16];
            double* drift = buf;
            double* raw = buf + 16;
            double* kinc = buf + 32;
            double* sigma = buf + 48;
            double* xi = sigma + 16 * 16;
            std::span<double> xs(&c.positions[i * d], d);

            model_.drift(t, xs, std::span<double>(drift, d));
            for (std::size_t k = 0; k < d; ++k) {
                if (!std::isfinite(drift[k])) {
                    status_[i] = 1;
                    return;
                }
                if (!std::isfinite(force_[i * d + k])) {
                    status_[i] = 2;
                    return;
                }
                drift[k] += force_[i * d + k];
            }
            if (opts_.taming) {
                const double nd = norm(std::span<const double>(drift, d));
                const double cap = opts_.taming_cap / std::sqrt(dt);
                if (nd > cap) {
                    for (std::size_t k = 0; k < d; ++k) drift[k] *= cap / nd;
                    flags_[i] |= 4;
                }
            }
            for (std::size_t k = 0; k < d; ++k) raw[k] = xs[k] + drift[k] * dt;
            if (noisy) {
                model_.diffusion(t, xs, std::span<double>(sigma, d * dn));
                noise_.fill(opts_.particle_offset + i, step, std::span<double>(xi, dn));
                for (std::size_t k = 0; k < d; ++k) {
                    double s = 0.0;
                    for (std::size_t m = 0; m < dn; ++m) s += sigma[k * dn + m] * xi[m];
                    if (!std::isfinite(s)) {
                        status_[i] = 3;
                        return;
                    }
                    raw[k] += noise_scale * s;
                }
            }
            const bool inside = domain_.contains(std::span<const double>(raw, d), 0.0);
            std::copy(raw, raw + d, xs.begin());
            const double km = domain_.project_into(xs, std::span<double>(kinc, d));
            if (!inside) flags_[i] |= 1;
            if (inside && km != 0.0) flags_[i] |= 2;
            if (!domain_.contains(xs, 0.0)) flags_[i] |= 8;
            c.local_time_magnitude[i] += km;
            for (std::size_t k = 0; k < d; ++k) c.local_time_vector[i * d + k] += kinc[k];
        });

        for (std::size_t i = 0; i < n; ++i) {
            if (status_[i] != 0) {
                static const char* what[] = {"", "drift", "interaction", "diffusion"};
                std::ostringstream os;
                os << "non-finite " << what[status_[i]] << " at particle " << i << ", t=" << t << ", step " << step
                   << ", position (";
                for (std::size_t k = 0; k < d; ++k) os << (k ? "," : "") << c.positions[i * d + k];
                os << ")";
                throw NumericalError(os.str());
            }
        }

        StepStats s;
        s.steps = 1;
        s.particle_steps = n;
        for (std::size_t i = 0; i < n; ++i) {
            s.pushes += flags_[i] & 1;
            s.interior_local_time_growth += (flags_[i] >> 1) & 1;
            s.tamed += (flags_[i] >> 2) & 1;
            s.exterior_states += (flags_[i] >> 3) & 1;
        }
        c.step += 1;
        c.time = static_cast<double>(c.step) * dt;
        return s;
    }

private:
    void compute_interaction(const ParticleCloud& c, std::span<double> out) {
        const std::size_t n = c.n, d = c.dim;
        if (opts_.mode == InteractionMode::frozen_field) {
            const double t = c.time;
            parallel_for(n, opts_.workers, [&](std::size_t i) {
                opts_.frozen(t, c.particle(i), out.subspan(i * d, d));
            });
        } else if (opts_.mode == InteractionMode::particle_mean && !model_.zero_kernel) {
            interaction_.compute(c.positions, n, out, opts_.workers);
        } else {
            std::fill(out.begin(), out.end(), 0.0);
        }
    }

    const ModelCoefficients& model_;
    const ConvexDomain& domain_;
    StepOptions opts_;
    NormalStream noise_;
    InteractionEvaluator interaction_;
    bool skip_interaction_ = false;
    std::vector<double> force_;
    std::vector<std::uint8_t> status_, flags_;
};

inline StepStats step_reflected(ParticleCloud& cloud, const ModelCoefficients& model, const ConvexDomain& domain,
                                const StepOptions& opts) {
    ReflectedStepper s(model, domain, opts);
    return s.step(cloud);
}

// ---- simulation driver ------------------------------------------------------

class Recorder {
public:
    virtual ~Recorder() = default;
    virtual void record(const ParticleCloud& cloud) = 0;
    virtual void finish() {}
};

struct SimConfig {
    double dt = 1e-3;
    double t_end = 1.0;
    double epsilon = 1.0;
    std::size_t n_particles = 1;
    std::uint64_t seed = 0;
    InteractionMode interaction = InteractionMode::particle_mean;
    VectorField frozen;
    InteractionMethod method = InteractionMethod::automatic;
    std::optional<bool> taming; // default: on when the model's growth order r >= 3
    double taming_cap = 1.0;
    int workers = 1;
    std::vector<double> snapshot_times; // snapped to the grid
    std::optional<Vector> x0;           // default: model.x0

    void validate() const {
        if (!(dt > 0.0) || !(t_end > 0.0)) throw ConfigError("dt and t_end must be positive");
        if (dt > t_end) throw ConfigError("dt must not exceed t_end");
        if (n_particles < 1) throw ConfigError("N must be >= 1");
        if (epsilon < 0.0) throw ConfigError("epsilon must be nonnegative");
    }

    std::uint64_t num_steps() const {
        return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(t_end / dt)));
    }
};

inline std::vector<std::uint64_t> snap_to_grid(const std::vector<double>& times, double dt, std::uint64_t max_step) {
    std::vector<std::uint64_t> steps;
    for (double t : times) {
        const auto k = static_cast<std::uint64_t>(std::max(0.0, std::llround(t / dt) * 1.0));
        steps.push_back(std::min(k, max_step));
    }
    std::sort(steps.begin(), steps.end());
    steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
    return steps;
}

// Closed-form moment bound for sup_{[T0, T0+w]} E|X - x0|^p from the decoupled
// equation's estimate; integrals are supplied over the window.
struct MomentBoundInputs {
    double p = 2.0;
    double lipschitz = 0.0;
    double window = 1.0;
    double initial_moment = 0.0;   // E|X_{T0} - x0|^p
    double int_drift_norm = 0.0;   // int |b(r, x0)| dr
    double int_g_norm = 0.0;       // int |g(r, x0)| dr
    double int_sigma_norm2 = 0.0;  // int |sigma(r, x0)|^2 dr (noise scale included)
};

inline double moment_bound(const MomentBoundInputs& in) {
    const double p = in.p, L = in.lipschitz;
    const double a = 4.0 * in.initial_moment;
    const double b = std::pow(4.0 * (p - 1.0), p - 1.0) *
                     (std::pow(in.int_drift_norm, p) + std::pow(in.int_g_norm, p));
    const double c = 2.0 * std::pow(p - 1.0, p / 2.0) * std::pow(p - 2.0, (p - 2.0) / 2.0) * std::pow(4.0, p / 2.0) *
                     std::pow(in.int_sigma_norm2, p / 2.0);
    return (a + b + c) * std::exp((4.0 * p * L + 2.0 * p * (p - 1.0) * L * L) * in.window);
}

struct MomentMonitor {
    double p = 2.0;
    std::vector<double> mean, stderr_; // per grid step, including t = 0
    double sup = 0.0;
    double sup_stderr = 0.0;
    double bound = kInf;
};

struct SimulationResult {
    ParticleCloud final_cloud;
    std::uint64_t steps = 0;
    StepStats stats;
    std::vector<MomentMonitor> moments; // p = 2 and p = 2r
};

namespace detail {

inline MeanStderr cloud_moment(const ParticleCloud& c, std::span<const double> ref, double p,
                               std::vector<double>& scratch) {
    scratch.resize(c.n);
    for (std::size_t i = 0; i < c.n; ++i) {
        const double r = dist(c.particle(i), ref);
        scratch[i] = p == 2.0 ? r * r : std::pow(r, p);
    }
    return mean_stderr(scratch);
}

} // namespace detail

inline SimulationResult simulate_paths(const ModelCoefficients& model, const ConvexDomain& domain,
                                       const SimConfig& cfg, Recorder* recorder = nullptr) {
    cfg.validate();
    const Vector x0 = cfg.x0 ? *cfg.x0 : model.x0;
    require_dim(x0.size(), model.dim, "simulate x0");
    if (!domain.contains(x0, 0.0)) throw ConfigError("x0 lies outside the domain");

    StepOptions so;
    so.dt = cfg.dt;
    so.epsilon = cfg.epsilon;
    so.seed = cfg.seed;
    so.mode = cfg.interaction;
    so.frozen = cfg.frozen;
    so.method = cfg.method;
    so.taming = cfg.taming.value_or(model.growth_order >= 3.0);
    so.taming_cap = cfg.taming_cap;
    so.workers = cfg.workers;
    ReflectedStepper stepper(model, domain, so);

    const std::uint64_t K = cfg.num_steps();
    const auto snaps = snap_to_grid(cfg.snapshot_times, cfg.dt, K);
    std::size_t next_snap = 0;

    SimulationResult res;
    res.final_cloud = ParticleCloud::at_point(cfg.n_particles, x0);
    auto& c = res.final_cloud;

    const std::array<double, 2> orders{2.0, 2.0 * model.growth_order};
    for (double p : orders) {
        MomentMonitor m;
        m.p = p;
        res.moments.push_back(m);
    }
    std::vector<double> scratch, force(c.n * c.dim), g_at_x0(c.dim), b_at_x0(c.dim),
        sig(c.dim * model.noise_dim);
    double int_b = 0.0, int_g = 0.0, int_s2 = 0.0;

    auto observe = [&]() {
        for (auto& m : res.moments) {
            const auto ms = detail::cloud_moment(c, x0, m.p, scratch);
            m.mean.push_back(ms.mean);
            m.stderr_.push_back(ms.stderr_);
            if (ms.mean > m.sup || m.mean.size() == 1) {
                m.sup = ms.mean;
                m.sup_stderr = ms.stderr_;
            }
        }
        if (next_snap < snaps.size() && snaps[next_snap] == c.step) {
            if (recorder) recorder->record(c);
            ++next_snap;
        }
    };

    observe();
    for (std::uint64_t k = 0; k < K; ++k) {
        // Integrands of the moment bound, left-point rule.
        model.drift(c.time, x0, b_at_x0);
        int_b += norm(b_at_x0) * cfg.dt;
        model.diffusion(c.time, x0, sig);
        int_s2 += cfg.epsilon * norm2(sig) * cfg.dt;
        if (cfg.interaction == InteractionMode::frozen_field) {
            cfg.frozen(c.time, x0, g_at_x0);
            int_g += norm(g_at_x0) * cfg.dt;
        } else if (cfg.interaction == InteractionMode::particle_mean && !model.zero_kernel) {
            std::fill(g_at_x0.begin(), g_at_x0.end(), 0.0);
            Vector u(c.dim), fu(c.dim);
            for (std::size_t j = 0; j < c.n; ++j) {
                for (std::size_t q = 0; q < c.dim; ++q) u[q] = x0[q] - c.positions[j * c.dim + q];
                model.kernel(u, fu);
                for (std::size_t q = 0; q < c.dim; ++q) g_at_x0[q] += fu[q] / static_cast<double>(c.n);
            }
            int_g += norm(g_at_x0) * cfg.dt;
        }
        try {
            res.stats += stepper.step(c);
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " (aborted at step " + std::to_string(k) + ")");
        }
        observe();
    }
    res.steps = K;
    const double T = static_cast<double>(K) * cfg.dt;
    for (auto& m : res.moments) {
        MomentBoundInputs in;
        in.p = m.p;
        in.lipschitz = model.lipschitz;
        in.window = T;
        in.int_drift_norm = int_b;
        in.int_g_norm = int_g;
        in.int_sigma_norm2 = int_s2;
        m.bound = moment_bound(in);
    }
    if (recorder) recorder->finish();
    return res;
}

} // namespace rmv
