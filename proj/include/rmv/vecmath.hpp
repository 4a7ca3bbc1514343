#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace rmv {

using Vector = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return dot(a, a); }
inline double norm(std::span<const double> a) { return std::sqrt(norm2(a)); }

inline double dist2(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline double dist(std::span<const double> a, std::span<const double> b) {
    return std::sqrt(dist2(a, b));
}

inline Vector sub(std::span<const double> a, std::span<const double> b) {
    Vector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

inline bool all_finite(std::span<const double> a) {
    return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

// Sum in a fixed binary-tree order. The result depends only on the values and
// their order, so it is reproducible regardless of how the inputs were produced.
inline double pairwise_sum(std::span<const double> v) {
    const std::size_t n = v.size();
    if (n == 0) return 0.0;
    if (n <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

// Mean of v that is exact when all entries are equal: accumulates deviations
// from the first entry.
inline double stable_mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    const double ref = v[0];
    double s = 0.0;
    for (double x : v) s += x - ref;
    return ref + s / static_cast<double>(v.size());
}

struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;
};

inline MeanStderr mean_stderr(std::span<const double> v) {
    MeanStderr out;
    if (v.empty()) return out;
    out.mean = stable_mean(v);
    if (v.size() < 2) return out;
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    const double n = static_cast<double>(v.size());
    out.stderr_ = std::sqrt(ss / (n - 1.0) / n);
    return out;
}

} // namespace rmv
