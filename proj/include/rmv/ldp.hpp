#pragma once

// Deterministic skeleton machinery on a uniform grid.
//
//   psi:        d psi = b(t, psi) dt - dk                    (projected Euler)
//   skeleton:   dH = [b(t, H) + f(H - psi)] dt + sigma(t, H) dh - dk
//   H^n:        as skeleton, but sigma is frozen at the coarse nodes iT/n and
//               h is replaced by its linear interpolation on that mesh, i.e.
//               the increment over a fine step is
//               sigma(iT/n, H(iT/n)) (h((i+1)T/n) - h(iT/n)) (n/T) dt
//   action:     I'(h) = 1/2 sum_k |dh_k/dt|^2 dt

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "engine.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "model.hpp"
#include "vecmath.hpp"

namespace rmv {

// Piecewise-linear control on a uniform grid, h(0) = 0.
struct ControlPath {
    double dt = 0.0;
    std::size_t dim = 1;
    std::vector<double> values; // (K+1) x dim

    std::size_t steps() const { return values.size() / dim - 1; }
    double horizon() const { return static_cast<double>(steps()) * dt; }
    std::span<const double> at(std::size_t k) const { return {values.data() + k * dim, dim}; }

    void validate() const {
        if (!(dt > 0.0) || dim == 0 || values.size() < 2 * dim || values.size() % dim != 0)
            throw ConfigError("control path needs dt > 0 and at least two nodes");
        for (std::size_t c = 0; c < dim; ++c)
            if (values[c] != 0.0) throw ConfigError("control path must start at 0");
        if (!all_finite(values)) throw NumericalError("control path has non-finite values");
    }

    static ControlPath zero(std::size_t dim, double dt, double T) {
        const auto K = static_cast<std::size_t>(std::llround(T / dt));
        return {dt, dim, std::vector<double>((K + 1) * dim, 0.0)};
    }

    // Samples h at the grid nodes; h(0) must be 0.
    static ControlPath from_function(std::size_t dim, double dt, double T,
                                     const std::function<void(double, std::span<double>)>& h) {
        ControlPath p = zero(dim, dt, T);
        for (std::size_t k = 1; k <= p.steps(); ++k)
            h(static_cast<double>(k) * dt, std::span<double>(p.values.data() + k * dim, dim));
        p.validate();
        return p;
    }
};

struct PathGrid {
    double dt = 0.0;
    std::size_t dim = 1;
    std::vector<double> values;     // (K+1) x dim
    std::vector<double> local_time; // K+1, accumulated |k|

    std::size_t steps() const { return local_time.size() - 1; }
    std::span<const double> at(std::size_t k) const { return {values.data() + k * dim, dim}; }
};

inline double sup_distance(const PathGrid& a, const PathGrid& b) {
    if (a.values.size() != b.values.size() || a.dim != b.dim) throw DimensionError("path grids differ in shape");
    double s = 0.0;
    for (std::size_t k = 0; k <= a.steps(); ++k) s = std::max(s, dist(a.at(k), b.at(k)));
    return s;
}

namespace detail {

inline void require_finite(std::span<const double> v, const char* what, double t) {
    if (!all_finite(v)) throw NumericalError(std::string("non-finite ") + what + " at t=" + std::to_string(t));
}

inline PathGrid start_path(const ConvexDomain& domain, std::span<const double> x0, double dt, std::size_t K) {
    if (!domain.contains(x0, 0.0)) throw ConfigError("x0 lies outside the domain");
    PathGrid p;
    p.dt = dt;
    p.dim = x0.size();
    p.values.resize((K + 1) * p.dim);
    p.local_time.assign(K + 1, 0.0);
    std::copy(x0.begin(), x0.end(), p.values.begin());
    return p;
}

} // namespace detail

inline PathGrid psi(const ModelCoefficients& model, const ConvexDomain& domain, std::span<const double> x0, double dt,
                    double T) {
    if (!(dt > 0.0) || !(T > 0.0)) throw ConfigError("dt and T must be positive");
    require_dim(x0.size(), model.dim, "psi x0");
    const auto K = static_cast<std::size_t>(std::llround(T / dt));
    const std::size_t d = model.dim;
    PathGrid p = detail::start_path(domain, x0, dt, K);
    Vector x(x0.begin(), x0.end()), b(d), kinc(d);
    for (std::size_t k = 0; k < K; ++k) {
        const double t = static_cast<double>(k) * dt;
        model.drift(t, x, b);
        detail::require_finite(b, "drift", t);
        for (std::size_t c = 0; c < d; ++c) x[c] += b[c] * dt;
        p.local_time[k + 1] = p.local_time[k] + domain.project_into(x, kinc);
        std::copy(x.begin(), x.end(), p.values.begin() + (k + 1) * d);
    }
    return p;
}

namespace detail {

// Shared integrator: cell = number of fine steps per frozen-sigma cell.
// cell == 1 is the skeleton itself.
inline PathGrid skeleton_impl(const ModelCoefficients& model, const ConvexDomain& domain,
                              std::span<const double> x0, const ControlPath& h, std::size_t cell) {
    h.validate();
    require_dim(x0.size(), model.dim, "skeleton x0");
    require_dim(h.dim, model.noise_dim, "control dimension");
    const double dt = h.dt;
    const std::size_t K = h.steps(), d = model.dim, dn = model.noise_dim;
    const PathGrid ps = psi(model, domain, x0, dt, h.horizon());
    PathGrid p = start_path(domain, x0, dt, K);
    Vector x(x0.begin(), x0.end()), drift(d), fv(d), u(d), sigma(d * dn), kinc(d), dh(dn);
    const double scale = cell == 1 ? 1.0 : 1.0 / static_cast<double>(cell);
    for (std::size_t k = 0; k < K; ++k) {
        const double t = static_cast<double>(k) * dt;
        model.drift(t, x, drift);
        require_finite(drift, "drift", t);
        if (!model.zero_kernel) {
            const auto pk = ps.at(k);
            for (std::size_t c = 0; c < d; ++c) u[c] = x[c] - pk[c];
            model.kernel(u, fv);
            require_finite(fv, "kernel", t);
            for (std::size_t c = 0; c < d; ++c) drift[c] += fv[c];
        }
        if (k % cell == 0) {
            model.diffusion(t, x, sigma);
            require_finite(sigma, "diffusion", t);
            const std::size_t k0 = k, k1 = std::min(K, k + cell);
            for (std::size_t m = 0; m < dn; ++m) dh[m] = h.at(k1)[m] - h.at(k0)[m];
        }
        for (std::size_t c = 0; c < d; ++c) {
            double s = 0.0;
            for (std::size_t m = 0; m < dn; ++m) s += sigma[c * dn + m] * dh[m];
            x[c] += drift[c] * dt + s * scale;
        }
        p.local_time[k + 1] = p.local_time[k] + domain.project_into(x, kinc);
        std::copy(x.begin(), x.end(), p.values.begin() + (k + 1) * d);
    }
    return p;
}

} // namespace detail

inline PathGrid skeleton(const ModelCoefficients& model, const ConvexDomain& domain, std::span<const double> x0,
                         const ControlPath& h) {
    return detail::skeleton_impl(model, domain, x0, h, 1);
}

// n coarse cells over [0, T]; T/n must be a whole number of grid steps.
inline PathGrid euler_skeleton(const ModelCoefficients& model, const ConvexDomain& domain,
                               std::span<const double> x0, const ControlPath& h, std::size_t n) {
    h.validate();
    if (n < 1) throw ConfigError("euler skeleton needs n >= 1");
    const std::size_t K = h.steps();
    if (K % n != 0) throw ConfigError("T/n must be a multiple of dt (steps " + std::to_string(K) + ", n " +
                                      std::to_string(n) + ")");
    return detail::skeleton_impl(model, domain, x0, h, K / n);
}

inline double action(const ControlPath& h) {
    h.validate();
    std::vector<double> terms(h.steps());
    for (std::size_t k = 0; k < h.steps(); ++k) terms[k] = dist2(h.at(k + 1), h.at(k)) / h.dt;
    return 0.5 * pairwise_sum(terms);
}

struct ConcentrationRow {
    double epsilon = 0.0;
    double sup_mean = 0.0;  // sup_t mean |X_t - psi_t|^2
    double sup_stderr = 0.0;
    double sup_time = 0.0;
    StepStats stats;
};

struct ConcentrationOptions {
    double dt = 1e-3;
    double T = 1.0;
    std::size_t paths = 1024;
    std::uint64_t seed = 0;
    int workers = 1;
    InteractionMethod method = InteractionMethod::automatic;
    std::optional<bool> taming;
};

// Runs the particle system (N = paths) per epsilon with a shared seed and
// measures the squared distance to the skeleton psi.
inline std::vector<ConcentrationRow> concentration_check(const ModelCoefficients& model, const ConvexDomain& domain,
                                                         std::span<const double> x0,
                                                         const std::vector<double>& eps_list,
                                                         const ConcentrationOptions& o) {
    for (std::size_t i = 1; i < eps_list.size(); ++i)
        if (eps_list[i] > eps_list[i - 1]) throw ConfigError("epsilon list must be nonincreasing");
    const PathGrid ps = psi(model, domain, x0, o.dt, o.T);
    const std::size_t K = ps.steps();
    std::vector<ConcentrationRow> rows;
    std::vector<double> vals(o.paths);
    for (double eps : eps_list) {
        StepOptions so;
        so.dt = o.dt;
        so.epsilon = eps;
        so.seed = o.seed;
        so.method = o.method;
        so.taming = o.taming.value_or(model.growth_order >= 3.0);
        so.workers = o.workers;
        ReflectedStepper stepper(model, domain, so);
        ParticleCloud c = ParticleCloud::at_point(o.paths, x0);
        ConcentrationRow row;
        row.epsilon = eps;
        for (std::size_t k = 1; k <= K; ++k) {
            row.stats += stepper.step(c);
            for (std::size_t i = 0; i < c.n; ++i) vals[i] = dist2(c.particle(i), ps.at(k));
            const auto ms = mean_stderr(vals);
            if (ms.mean > row.sup_mean) {
                row.sup_mean = ms.mean;
                row.sup_stderr = ms.stderr_;
                row.sup_time = c.time;
            }
        }
        rows.push_back(row);
    }
    return rows;
}

} // namespace rmv
