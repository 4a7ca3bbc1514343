#pragma once

// Distances between uniform empirical measures, moment monitors and the
// log-log rate regression.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "assignment.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "recorder.hpp"
#include "rng.hpp"
#include "vecmath.hpp"

namespace rmv {

struct EmpiricalMeasure {
    std::size_t dim = 1;
    std::vector<double> samples; // size() x dim, row-major

    EmpiricalMeasure() = default;
    EmpiricalMeasure(std::vector<double> s, std::size_t d) : dim(d), samples(std::move(s)) { validate(); }

    std::size_t size() const { return dim ? samples.size() / dim : 0; }
    std::span<const double> point(std::size_t i) const { return {samples.data() + i * dim, dim}; }

    void validate() const {
        if (dim == 0 || samples.empty() || samples.size() % dim != 0)
            throw DimensionError("empirical measure needs M >= 1 samples of dimension >= 1");
        if (!all_finite(samples)) throw NumericalError("empirical measure has non-finite samples");
    }
};

enum class W2Kind { exact_1d, exact_assignment, sliced };

struct W2Method {
    W2Kind kind = W2Kind::exact_1d;
    std::size_t directions = 64; // sliced only
    std::uint64_t seed = 0;      // sliced only

    static W2Method exact_1d() { return {W2Kind::exact_1d, 0, 0}; }
    static W2Method exact_assignment() { return {W2Kind::exact_assignment, 0, 0}; }
    static W2Method sliced(std::size_t k, std::uint64_t seed) { return {W2Kind::sliced, k, seed}; }
};

inline constexpr std::size_t kMaxAssignmentSize = 512;

namespace detail {

// Squared W2 between sorted 1-D samples by the quantile coupling. Handles
// unequal sizes by merging the two step functions.
inline double w2sq_sorted(std::span<const double> a, std::span<const double> b) {
    const std::size_t m = a.size(), n = b.size();
    std::vector<double> terms;
    if (m == n) {
        terms.resize(n);
        for (std::size_t i = 0; i < n; ++i) terms[i] = (a[i] - b[i]) * (a[i] - b[i]);
        return pairwise_sum(terms) / static_cast<double>(n);
    }
    terms.reserve(m + n);
    std::size_t i = 0, j = 0;
    double prev = 0.0;
    while (i < m && j < n) {
        // Next breakpoint of either quantile function, compared exactly as
        // (i+1)/m vs (j+1)/n.
        const auto lhs = static_cast<std::uint64_t>(i + 1) * n, rhs = static_cast<std::uint64_t>(j + 1) * m;
        const double q = lhs <= rhs ? static_cast<double>(i + 1) / m : static_cast<double>(j + 1) / n;
        const double diff = a[i] - b[j];
        terms.push_back((q - prev) * diff * diff);
        prev = q;
        if (lhs <= rhs) ++i;
        if (rhs <= lhs) ++j;
    }
    return pairwise_sum(terms);
}

inline std::vector<double> sorted_copy(std::span<const double> v) {
    std::vector<double> s(v.begin(), v.end());
    std::sort(s.begin(), s.end());
    return s;
}

} // namespace detail

inline double wasserstein2_exact_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    if (mu.dim != 1 || nu.dim != 1) throw DimensionError("exact_1d requires d = 1");
    const auto a = detail::sorted_copy(mu.samples), b = detail::sorted_copy(nu.samples);
    return std::sqrt(detail::w2sq_sorted(a, b));
}

inline double wasserstein2_assignment(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int workers = 1) {
    const std::size_t n = mu.size();
    if (nu.size() != n) throw DimensionError("exact_assignment requires equal sample counts");
    if (n > kMaxAssignmentSize)
        throw ConfigError("exact_assignment supports at most " + std::to_string(kMaxAssignmentSize) + " samples");
    std::vector<double> cost(n * n);
    parallel_for(n, workers, [&](std::size_t i) {
        for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = dist2(mu.point(i), nu.point(j));
    });
    const auto r = solve_assignment(cost, n);
    std::vector<double> terms(n);
    for (std::size_t i = 0; i < n; ++i) terms[i] = cost[i * n + r.column_of_row[i]];
    std::sort(terms.begin(), terms.end()); // order-free sum keeps W2(mu, nu) == W2(nu, mu) bitwise
    return std::sqrt(pairwise_sum(terms) / static_cast<double>(n));
}

struct SlicedEstimate {
    double w2 = 0.0;     // sqrt of the mean squared 1-D distance
    double stderr_ = 0.0; // standard error of the mean squared distance
};

// Monte Carlo estimator over random unit directions; not a bound on W2.
inline SlicedEstimate sliced_wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, std::size_t k,
                                          std::uint64_t seed) {
    const std::size_t d = mu.dim;
    if (k < 1) throw ConfigError("sliced W2 needs at least one direction");
    const NormalStream dirs(seed, stream_tag::sliced_directions);
    std::vector<double> vals(k), dir(d), pa(mu.size()), pb(nu.size());
    for (std::size_t j = 0; j < k; ++j) {
        dirs.fill(j, 0, dir);
        const double nd = norm(dir);
        for (auto& c : dir) c /= nd;
        for (std::size_t i = 0; i < pa.size(); ++i) pa[i] = dot(mu.point(i), dir);
        for (std::size_t i = 0; i < pb.size(); ++i) pb[i] = dot(nu.point(i), dir);
        std::sort(pa.begin(), pa.end());
        std::sort(pb.begin(), pb.end());
        vals[j] = detail::w2sq_sorted(pa, pb);
    }
    const auto ms = mean_stderr(vals);
    return {std::sqrt(ms.mean), ms.stderr_};
}

inline double wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, const W2Method& method = {}) {
    mu.validate();
    nu.validate();
    require_dim(nu.dim, mu.dim, "wasserstein2");
    switch (method.kind) {
    case W2Kind::exact_1d: return wasserstein2_exact_1d(mu, nu);
    case W2Kind::exact_assignment: return wasserstein2_assignment(mu, nu);
    case W2Kind::sliced: return sliced_wasserstein2(mu, nu, method.directions, method.seed).w2;
    }
    return 0.0;
}

// ---- moments ------------------------------------------------------------------

struct SupMoment {
    std::vector<double> times, mean, stderr_;
    double sup = 0.0;
    double sup_stderr = 0.0;
    double sup_time = 0.0;
};

inline SupMoment sup_moment(const std::vector<Snapshot>& snaps, double p, std::span<const double> x_ref) {
    if (p < 1.0) throw ConfigError("sup_moment needs p >= 1");
    SupMoment out;
    std::vector<double> vals;
    for (const auto& s : snaps) {
        require_dim(s.dim, x_ref.size(), "sup_moment");
        const std::size_t n = s.positions.size() / s.dim;
        vals.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double r = dist(std::span<const double>(s.positions).subspan(i * s.dim, s.dim), x_ref);
            vals[i] = p == 2.0 ? r * r : std::pow(r, p);
        }
        const auto ms = mean_stderr(vals);
        out.times.push_back(s.time);
        out.mean.push_back(ms.mean);
        out.stderr_.push_back(ms.stderr_);
        if (out.mean.size() == 1 || ms.mean > out.sup) {
            out.sup = ms.mean;
            out.sup_stderr = ms.stderr_;
            out.sup_time = s.time;
        }
    }
    return out;
}

// ---- regression -----------------------------------------------------------------

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
    std::size_t points = 0;
};

inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n != y.size() || n < 2) throw ConfigError("least squares needs at least two points");
    const double mx = stable_mean(x), my = stable_mean(y);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw ConfigError("least squares needs distinct abscissae");
    LinearFit f;
    f.points = n;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (n > 2) {
        double rss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = y[i] - f.intercept - f.slope * x[i];
            rss += e * e;
        }
        f.slope_stderr = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
    }
    return f;
}

// Two-sided 95% Student t quantile.
inline double t_quantile_975(std::size_t dof) {
    static constexpr double table[] = {0.0,   12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262,
                                       2.228, 2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093,
                                       2.086, 2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045,
                                       2.042};
    if (dof == 0) return std::numeric_limits<double>::infinity();
    return dof <= 30 ? table[dof] : 1.96;
}

struct RatePoint {
    double n = 0.0;
    double error = 0.0;
    double stderr_ = 0.0;
};

// Slope of log(error) against log(N).
inline LinearFit poc_rate_fit(const std::vector<RatePoint>& pts) {
    std::vector<double> x, y, distinct;
    for (const auto& p : pts) {
        if (!(p.error > 0.0) || !std::isfinite(p.error)) throw ConfigError("rate fit needs positive errors");
        if (!(p.n > 0.0)) throw ConfigError("rate fit needs positive N");
        x.push_back(std::log(p.n));
        y.push_back(std::log(p.error));
        if (std::find(distinct.begin(), distinct.end(), p.n) == distinct.end()) distinct.push_back(p.n);
    }
    if (distinct.size() < 3) throw ConfigError("rate fit needs at least three distinct N");
    return least_squares(x, y);
}

} // namespace rmv
