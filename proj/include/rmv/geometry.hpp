#pragma once

// Closed convex domains with exact Euclidean projection.
//
// The projection of a raw Euler point onto the domain is the one-step solution
// of the Skorokhod problem on a convex set: the projected point stays in the
// domain and the push (raw - projected) lies in the outward normal cone at the
// projected point. Every returned point satisfies contains(p, 0) exactly, which
// makes projection idempotent bit-for-bit.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "vecmath.hpp"

namespace rmv {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// {x : <normal, x> <= offset}; normal is stored with unit length.
struct HalfSpace {
    Vector normal;
    double offset = 0.0;
};

struct ReflectionStep {
    Vector projected_point;
    Vector k_increment;
    double k_magnitude_increment = 0.0;
};

enum class DomainKind { half_space, box, ball, orthant, polyhedron };

inline const char* to_string(DomainKind k) {
    switch (k) {
    case DomainKind::half_space: return "half_space";
    case DomainKind::box: return "box";
    case DomainKind::ball: return "ball";
    case DomainKind::orthant: return "orthant";
    case DomainKind::polyhedron: return "polyhedron";
    }
    return "?";
}

struct PolyhedronOptions {
    int max_sweeps = 10000;
    double tolerance = 1e-12;
};

namespace detail {

inline HalfSpace normalized(HalfSpace h) {
    const double n = norm(h.normal);
    if (!(n > 0.0) || !std::isfinite(n)) throw ConfigError("half-space normal must be nonzero and finite");
    for (double& v : h.normal) v /= n;
    h.offset /= n;
    return h;
}

// Move p by whole ulps against the normal until <a, p> <= c holds exactly.
inline bool snap_below(std::span<double> p, std::span<const double> a, double c) {
    for (int it = 0; it < 64; ++it) {
        if (dot(a, p) <= c) return true;
        for (std::size_t k = 0; k < p.size(); ++k) {
            if (a[k] > 0.0) p[k] = std::nextafter(p[k], -kInf);
            else if (a[k] < 0.0) p[k] = std::nextafter(p[k], kInf);
        }
    }
    // Ulp steps stall when the coordinates carrying the normal are tiny; push
    // along the normal by a growing multiple of the rounding scale instead.
    double scale = std::abs(c);
    for (double v : p) scale = std::max(scale, std::abs(v));
    const std::vector<double> base(p.begin(), p.end());
    for (double t = 0x1p-52 * (1.0 + scale); t < 1e-6 * (1.0 + scale) && dot(a, p) > c; t *= 2.0)
        for (std::size_t k = 0; k < p.size(); ++k) p[k] = base[k] - t * a[k];
    return dot(a, p) <= c;
}

// Small dense symmetric solve with partial pivoting; false if singular.
inline bool solve_dense(std::vector<double> m, std::vector<double>& rhs, std::size_t n) {
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(m[r * n + col]) > std::abs(m[piv * n + col])) piv = r;
        if (std::abs(m[piv * n + col]) < 1e-14) return false;
        if (piv != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(m[col * n + c], m[piv * n + c]);
            std::swap(rhs[col], rhs[piv]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = m[r * n + col] / m[col * n + col];
            for (std::size_t c = col; c < n; ++c) m[r * n + c] -= f * m[col * n + c];
            rhs[r] -= f * rhs[col];
        }
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = rhs[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= m[i * n + c] * rhs[c];
        rhs[i] = s / m[i * n + i];
    }
    return true;
}

} // namespace detail

class ConvexDomain {
public:
    struct HalfSpaceShape {
        HalfSpace face;
    };
    struct BoxShape {
        Vector lo, hi;
    };
    struct BallShape {
        Vector center;
        double radius = 1.0;
    };
    struct PolyhedronShape {
        std::vector<HalfSpace> faces;
        PolyhedronOptions options;
        Vector interior; // strictly feasible point
    };

    static ConvexDomain half_space(Vector normal, double offset) {
        ConvexDomain d(DomainKind::half_space, normal.size());
        d.shape_ = HalfSpaceShape{detail::normalized({std::move(normal), offset})};
        d.init_interior();
        return d;
    }

    static ConvexDomain box(Vector lo, Vector hi) {
        if (lo.size() != hi.size() || lo.empty()) throw ConfigError("box bounds must have equal nonzero length");
        for (std::size_t i = 0; i < lo.size(); ++i) {
            if (std::isnan(lo[i]) || std::isnan(hi[i]) || !(lo[i] < hi[i]) || lo[i] == kInf ||
                hi[i] == -kInf)
                throw ConfigError("box needs lo < hi in every coordinate");
        }
        ConvexDomain d(DomainKind::box, lo.size());
        d.shape_ = BoxShape{std::move(lo), std::move(hi)};
        d.init_interior();
        return d;
    }

    static ConvexDomain interval(double lo, double hi) { return box({lo}, {hi}); }

    static ConvexDomain whole_space(std::size_t dim) {
        return box(Vector(dim, -kInf), Vector(dim, kInf));
    }

    static ConvexDomain ball(Vector center, double radius) {
        if (!(radius > 0.0) || !std::isfinite(radius)) throw ConfigError("ball radius must be positive");
        if (center.empty() || !all_finite(center)) throw ConfigError("ball center must be finite");
        ConvexDomain d(DomainKind::ball, center.size());
        d.shape_ = BallShape{std::move(center), radius};
        d.init_interior();
        return d;
    }

    static ConvexDomain orthant(std::size_t dim) {
        if (dim == 0) throw ConfigError("orthant dimension must be positive");
        ConvexDomain d(DomainKind::orthant, dim);
        d.shape_ = BoxShape{Vector(dim, 0.0), Vector(dim, kInf)};
        d.init_interior();
        return d;
    }

    static ConvexDomain polyhedron(std::vector<HalfSpace> faces, PolyhedronOptions opts = {}) {
        if (faces.empty()) throw ConfigError("polyhedron needs at least one face");
        const std::size_t dim = faces.front().normal.size();
        for (auto& f : faces) {
            require_dim(f.normal.size(), dim, "polyhedron face");
            f = detail::normalized(std::move(f));
        }
        ConvexDomain d(DomainKind::polyhedron, dim);
        d.shape_ = PolyhedronShape{std::move(faces), opts, {}};
        d.init_interior();
        std::get<PolyhedronShape>(d.shape_).interior = d.interior_;
        return d;
    }

    DomainKind kind() const { return kind_; }
    std::size_t dimension() const { return dim_; }
    const Vector& interior_point() const { return interior_; }

    template <class Shape>
    const Shape& shape() const { return std::get<Shape>(shape_); }

    bool contains(std::span<const double> x, double tol = 0.0) const {
        require_dim(x.size(), dim_, "contains");
        return std::visit([&](const auto& s) { return contains_impl(s, x, tol); }, shape_);
    }

    // Strict interior test, used for open exit domains.
    bool contains_open(std::span<const double> x) const { return depth(x) > 0.0; }

    // Distance from x to the boundary when x is inside (0 on the boundary),
    // negative when outside (for balls and single half-spaces this is the exact
    // signed distance; for boxes and polyhedra it is the min over faces).
    double depth(std::span<const double> x) const {
        require_dim(x.size(), dim_, "depth");
        return std::visit([&](const auto& s) { return depth_impl(s, x); }, shape_);
    }

    // Project x in place; writes raw - projected into k_increment and returns its norm.
    double project_into(std::span<double> x, std::span<double> k_increment) const {
        require_dim(x.size(), dim_, "project");
        require_dim(k_increment.size(), dim_, "project k_increment");
        if (contains(x, 0.0)) {
            std::fill(k_increment.begin(), k_increment.end(), 0.0);
            return 0.0;
        }
        Vector raw(x.begin(), x.end());
        std::visit([&](const auto& s) { project_impl(s, x); }, shape_);
        for (std::size_t i = 0; i < dim_; ++i) k_increment[i] = raw[i] - x[i];
        return norm(k_increment);
    }

    ReflectionStep project(std::span<const double> x) const {
        ReflectionStep r;
        r.projected_point.assign(x.begin(), x.end());
        r.k_increment.assign(x.size(), 0.0);
        r.k_magnitude_increment = project_into(r.projected_point, r.k_increment);
        return r;
    }

    // A unit member of the outward normal cone at a boundary point. At corners
    // of boxes and polyhedra this is the normalized sum of the active face
    // normals; any member of the cone is admissible.
    Vector outward_normal(std::span<const double> x, double tol = 1e-9) const {
        require_dim(x.size(), dim_, "outward_normal");
        if (!contains(x, tol)) throw Error("outward_normal: point lies outside the domain");
        Vector n(dim_, 0.0);
        std::visit([&](const auto& s) { normal_impl(s, x, tol, n); }, shape_);
        const double len = norm(n);
        if (!(len > 0.0)) throw Error("outward_normal: point is interior, no normal exists");
        for (double& v : n) v /= len;
        return n;
    }

    // Axis-aligned bounding box (entries may be infinite).
    std::pair<Vector, Vector> bounding_box() const {
        Vector lo(dim_, -kInf), hi(dim_, kInf);
        if (const auto* b = std::get_if<BoxShape>(&shape_)) {
            lo = b->lo;
            hi = b->hi;
        } else if (const auto* s = std::get_if<BallShape>(&shape_)) {
            for (std::size_t i = 0; i < dim_; ++i) {
                lo[i] = s->center[i] - s->radius;
                hi[i] = s->center[i] + s->radius;
            }
        }
        return {lo, hi};
    }

    // Finite box used for probing: the bounding box clipped to the cube of
    // half-width `radius` around the interior point.
    std::pair<Vector, Vector> probe_box(double radius) const {
        auto [lo, hi] = bounding_box();
        for (std::size_t i = 0; i < dim_; ++i) {
            lo[i] = std::max(lo[i], interior_[i] - radius);
            hi[i] = std::min(hi[i], interior_[i] + radius);
        }
        return {lo, hi};
    }

    nlohmann::json to_json() const;
    static ConvexDomain from_json(const nlohmann::json& j);

private:
    ConvexDomain(DomainKind k, std::size_t dim) : kind_(k), dim_(dim) {}

    // ---- half-space ----
    static bool contains_impl(const HalfSpaceShape& s, std::span<const double> x, double tol) {
        return dot(s.face.normal, x) - s.face.offset <= tol;
    }
    static double depth_impl(const HalfSpaceShape& s, std::span<const double> x) {
        return s.face.offset - dot(s.face.normal, x);
    }
    static void project_impl(const HalfSpaceShape& s, std::span<double> x) {
        const double v = dot(s.face.normal, x) - s.face.offset;
        for (std::size_t i = 0; i < x.size(); ++i) x[i] -= v * s.face.normal[i];
        if (!detail::snap_below(x, s.face.normal, s.face.offset))
            throw ConvergenceError("half-space projection could not be made feasible", v);
    }
    static void normal_impl(const HalfSpaceShape& s, std::span<const double> x, double tol, Vector& n) {
        if (s.face.offset - dot(s.face.normal, x) <= tol) n = s.face.normal;
    }

    // ---- box / orthant ----
    static bool contains_impl(const BoxShape& s, std::span<const double> x, double tol) {
        for (std::size_t i = 0; i < x.size(); ++i)
            if (!(x[i] >= s.lo[i] - tol && x[i] <= s.hi[i] + tol)) return false;
        return true;
    }
    static double depth_impl(const BoxShape& s, std::span<const double> x) {
        double d = kInf;
        for (std::size_t i = 0; i < x.size(); ++i) d = std::min({d, x[i] - s.lo[i], s.hi[i] - x[i]});
        return d;
    }
    static void project_impl(const BoxShape& s, std::span<double> x) {
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], s.lo[i], s.hi[i]);
    }
    static void normal_impl(const BoxShape& s, std::span<const double> x, double tol, Vector& n) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i] >= s.hi[i] - tol) n[i] += 1.0;
            if (x[i] <= s.lo[i] + tol) n[i] -= 1.0;
        }
    }

    // ---- ball ----
    static bool contains_impl(const BallShape& s, std::span<const double> x, double tol) {
        return dist(x, s.center) <= s.radius + tol;
    }
    static double depth_impl(const BallShape& s, std::span<const double> x) {
        return s.radius - dist(x, s.center);
    }
    static void project_impl(const BallShape& s, std::span<double> x) {
        const double r = dist(x, s.center);
        Vector u(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) u[i] = (x[i] - s.center[i]) / r;
        double scale = s.radius;
        for (int it = 0; it < 64; ++it) {
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = s.center[i] + scale * u[i];
            if (dist(x, s.center) <= s.radius) return;
            scale = std::nextafter(scale, 0.0) * (1.0 - 2.0 * std::numeric_limits<double>::epsilon());
        }
    }
    static void normal_impl(const BallShape& s, std::span<const double> x, double tol, Vector& n) {
        const double r = dist(x, s.center);
        if (r >= s.radius - tol && r > 0.0)
            for (std::size_t i = 0; i < x.size(); ++i) n[i] = x[i] - s.center[i];
    }

    // ---- polyhedron ----
    static bool contains_impl(const PolyhedronShape& s, std::span<const double> x, double tol) {
        for (const auto& f : s.faces)
            if (dot(f.normal, x) - f.offset > tol) return false;
        return true;
    }
    static double depth_impl(const PolyhedronShape& s, std::span<const double> x) {
        double d = kInf;
        for (const auto& f : s.faces) d = std::min(d, f.offset - dot(f.normal, x));
        return d;
    }
    static double max_violation(const PolyhedronShape& s, std::span<const double> x) {
        double v = 0.0;
        for (const auto& f : s.faces) v = std::max(v, dot(f.normal, x) - f.offset);
        return v;
    }
    static void project_impl(const PolyhedronShape& s, std::span<double> x) {
        const std::size_t d = x.size();
        const Vector raw(x.begin(), x.end());
        const double scale = 1.0 + norm(raw);

        std::vector<std::size_t> violated;
        for (std::size_t i = 0; i < s.faces.size(); ++i)
            if (dot(s.faces[i].normal, raw) > s.faces[i].offset) violated.push_back(i);

        // One violated face: the half-space projection is optimal if feasible.
        if (violated.size() == 1) {
            Vector p = raw;
            project_impl(HalfSpaceShape{s.faces[violated[0]]}, p);
            if (contains_impl(s, p, 0.0)) {
                std::copy(p.begin(), p.end(), x.begin());
                return;
            }
        }

        // Cyclic Dykstra over the faces.
        const std::size_t m = s.faces.size();
        Vector z = raw;
        std::vector<double> incr(m * d, 0.0);
        Vector y(d), prev(d);
        bool dykstra_converged = false;
        for (int sweep = 0; sweep < s.options.max_sweeps; ++sweep) {
            prev = z;
            for (std::size_t i = 0; i < m; ++i) {
                const auto& f = s.faces[i];
                for (std::size_t k = 0; k < d; ++k) y[k] = z[k] + incr[i * d + k];
                const double v = dot(f.normal, y) - f.offset;
                for (std::size_t k = 0; k < d; ++k) {
                    z[k] = v > 0.0 ? y[k] - v * f.normal[k] : y[k];
                    incr[i * d + k] = y[k] - z[k];
                }
            }
            if (dist(z, prev) <= s.options.tolerance * scale &&
                max_violation(s, z) <= s.options.tolerance * scale) {
                dykstra_converged = true;
                break;
            }
        }

        // Polish on the detected active set: exact projection onto the
        // intersection of active hyperplanes, accepted only if it satisfies KKT.
        // Dykstra's step-size stopping rule can fire while the iterate is still
        // far from the limit, so an uncertified iterate is only a last resort.
        bool converged = false;
        std::vector<std::size_t> active;
        for (std::size_t i = 0; i < m; ++i)
            if (s.faces[i].offset - dot(s.faces[i].normal, z) <= 1e-8 * scale) active.push_back(i);
        const std::size_t na = active.size();
        if (na > 0 && na <= d) {
            std::vector<double> gram(na * na), lambda(na);
            for (std::size_t a = 0; a < na; ++a) {
                const auto& fa = s.faces[active[a]];
                lambda[a] = dot(fa.normal, raw) - fa.offset;
                for (std::size_t b = 0; b < na; ++b)
                    gram[a * na + b] = dot(fa.normal, s.faces[active[b]].normal);
            }
            if (detail::solve_dense(gram, lambda, na) &&
                std::all_of(lambda.begin(), lambda.end(), [](double l) { return l >= -1e-12; })) {
                Vector p = raw;
                for (std::size_t a = 0; a < na; ++a)
                    for (std::size_t k = 0; k < d; ++k) p[k] -= lambda[a] * s.faces[active[a]].normal[k];
                if (max_violation(s, p) <= 1e-12 * scale) {
                    z = p;
                    converged = true;
                }
            }
        }
        if (!converged) {
            if (auto p = active_set_projection(s, raw)) {
                z = *p;
                converged = true;
            } else {
                converged = dykstra_converged;
            }
        }
        const double residual = max_violation(s, z);
        if (!converged || residual > 1e-9 * scale)
            throw ConvergenceError("polyhedron projection did not converge, residual " + std::to_string(residual),
                                   residual);
        // Rounding can leave z a few ulps outside; pull it toward the interior
        // point by the smallest relative step that lands inside.
        if (!contains_impl(s, z, 0.0)) {
            const Vector base = z;
            for (double t = 0x1p-52; t < 1e-6 && !contains_impl(s, z, 0.0); t *= 2.0)
                for (std::size_t k = 0; k < d; ++k) z[k] = base[k] + t * (s.interior[k] - base[k]);
        }
        if (!contains_impl(s, z, 0.0))
            throw ConvergenceError("polyhedron projection could not be made feasible", residual);
        std::copy(z.begin(), z.end(), x.begin());
    }
    // Primal active-set method for min |x - raw|^2 subject to the faces,
    // started at the interior point. Finite; used when Dykstra stalls on
    // nearly parallel faces.
    static std::optional<Vector> active_set_projection(const PolyhedronShape& s, const Vector& raw) {
        const std::size_t d = raw.size(), m = s.faces.size();
        Vector x = s.interior, p(d), r(d);
        std::vector<std::size_t> work;
        for (std::size_t it = 0; it < 50 * (m + d); ++it) {
            const std::size_t nw = work.size();
            for (std::size_t k = 0; k < d; ++k) r[k] = raw[k] - x[k];
            std::vector<double> gram(nw * nw), lambda(nw);
            for (std::size_t a = 0; a < nw; ++a) {
                lambda[a] = dot(s.faces[work[a]].normal, r);
                for (std::size_t b = 0; b < nw; ++b)
                    gram[a * nw + b] = dot(s.faces[work[a]].normal, s.faces[work[b]].normal);
            }
            if (nw > 0 && !detail::solve_dense(gram, lambda, nw)) return std::nullopt;
            p = r;
            for (std::size_t a = 0; a < nw; ++a)
                for (std::size_t k = 0; k < d; ++k) p[k] -= lambda[a] * s.faces[work[a]].normal[k];
            if (norm(p) <= 1e-13 * (1.0 + norm(r))) {
                std::size_t worst = nw;
                for (std::size_t a = 0; a < nw; ++a)
                    if (lambda[a] < 0.0 && (worst == nw || lambda[a] < lambda[worst])) worst = a;
                if (worst == nw) return x;
                work.erase(work.begin() + static_cast<std::ptrdiff_t>(worst));
                continue;
            }
            double alpha = 1.0;
            std::size_t block = m;
            for (std::size_t i = 0; i < m; ++i) {
                if (std::find(work.begin(), work.end(), i) != work.end()) continue;
                const double ap = dot(s.faces[i].normal, p);
                if (ap <= 0.0) continue;
                const double step = std::max(0.0, (s.faces[i].offset - dot(s.faces[i].normal, x)) / ap);
                if (step < alpha) {
                    alpha = step;
                    block = i;
                }
            }
            for (std::size_t k = 0; k < d; ++k) x[k] += alpha * p[k];
            if (block < m) work.push_back(block);
        }
        return std::nullopt;
    }

    static void normal_impl(const PolyhedronShape& s, std::span<const double> x, double tol, Vector& n) {
        for (const auto& f : s.faces)
            if (f.offset - dot(f.normal, x) <= tol)
                for (std::size_t k = 0; k < n.size(); ++k) n[k] += f.normal[k];
    }

    void init_interior() {
        interior_.assign(dim_, 0.0);
        std::visit(
            [&](const auto& s) {
                using S = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<S, HalfSpaceShape>) {
                    for (std::size_t i = 0; i < dim_; ++i) interior_[i] = (s.face.offset - 1.0) * s.face.normal[i];
                } else if constexpr (std::is_same_v<S, BoxShape>) {
                    for (std::size_t i = 0; i < dim_; ++i) {
                        const bool flo = std::isfinite(s.lo[i]), fhi = std::isfinite(s.hi[i]);
                        if (flo && fhi) interior_[i] = 0.5 * (s.lo[i] + s.hi[i]);
                        else if (flo) interior_[i] = s.lo[i] + 1.0;
                        else if (fhi) interior_[i] = s.hi[i] - 1.0;
                    }
                } else if constexpr (std::is_same_v<S, BallShape>) {
                    interior_ = s.center;
                } else {
                    interior_ = find_interior(s);
                }
            },
            shape_);
    }

    // Relaxation method on the shrunk system <a_i, x> <= c_i - delta for a
    // decreasing sequence of delta; any success proves a non-empty interior.
    static Vector find_interior(const PolyhedronShape& s) {
        const std::size_t d = s.faces.front().normal.size();
        double cscale = 1.0;
        for (const auto& f : s.faces) cscale = std::max(cscale, std::abs(f.offset));
        for (double delta = cscale; delta > 1e-9 * cscale; delta *= 0.1) {
            Vector x(d, 0.0);
            for (int it = 0; it < 20000; ++it) {
                double worst = 0.0;
                std::size_t wi = 0;
                for (std::size_t i = 0; i < s.faces.size(); ++i) {
                    const double v = dot(s.faces[i].normal, x) - (s.faces[i].offset - delta);
                    if (v > worst) {
                        worst = v;
                        wi = i;
                    }
                }
                if (worst <= 0.0) return x;
                for (std::size_t k = 0; k < d; ++k) x[k] -= worst * s.faces[wi].normal[k];
            }
        }
        throw ConfigError("polyhedron has empty interior (no strictly interior point found)");
    }

    DomainKind kind_;
    std::size_t dim_;
    std::variant<HalfSpaceShape, BoxShape, BallShape, PolyhedronShape> shape_;
    Vector interior_;
};

// ---- JSON ----------------------------------------------------------------
//
// {"kind": "box", "params": {"lo": [0, "-inf"], "hi": [1, "inf"]}}
// Infinite bounds are written as the strings "inf" / "-inf"; null is read as
// the unbounded side.

namespace detail {

inline nlohmann::json number_to_json(double v) {
    if (v == kInf) return "inf";
    if (v == -kInf) return "-inf";
    return v;
}

inline double number_from_json(const nlohmann::json& j, double null_value) {
    if (j.is_null()) return null_value;
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf" || s == "+inf") return kInf;
        if (s == "-inf") return -kInf;
        throw ConfigError("unrecognised number string '" + s + "'");
    }
    if (!j.is_number()) throw ConfigError("expected a number, got " + j.dump());
    return j.get<double>();
}

inline nlohmann::json vector_to_json(const Vector& v) {
    nlohmann::json a = nlohmann::json::array();
    for (double x : v) a.push_back(number_to_json(x));
    return a;
}

inline Vector vector_from_json(const nlohmann::json& j, double null_value = 0.0) {
    if (!j.is_array()) throw ConfigError("expected an array, got " + j.dump());
    Vector v;
    for (const auto& e : j) v.push_back(number_from_json(e, null_value));
    return v;
}

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

inline const nlohmann::json& required(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
    return j.at(key);
}

} // namespace detail

inline nlohmann::json ConvexDomain::to_json() const {
    using detail::vector_to_json;
    nlohmann::json params;
    switch (kind_) {
    case DomainKind::half_space: {
        const auto& s = std::get<HalfSpaceShape>(shape_);
        params = {{"normal", vector_to_json(s.face.normal)}, {"offset", s.face.offset}};
        break;
    }
    case DomainKind::box: {
        const auto& s = std::get<BoxShape>(shape_);
        params = {{"lo", vector_to_json(s.lo)}, {"hi", vector_to_json(s.hi)}};
        break;
    }
    case DomainKind::ball: {
        const auto& s = std::get<BallShape>(shape_);
        params = {{"center", vector_to_json(s.center)}, {"radius", s.radius}};
        break;
    }
    case DomainKind::orthant: params = {{"dimension", dim_}}; break;
    case DomainKind::polyhedron: {
        const auto& s = std::get<PolyhedronShape>(shape_);
        nlohmann::json faces = nlohmann::json::array();
        for (const auto& f : s.faces) faces.push_back({{"normal", vector_to_json(f.normal)}, {"offset", f.offset}});
        params = {{"faces", faces}};
        break;
    }
    }
    return {{"kind", to_string(kind_)}, {"params", params}};
}

inline ConvexDomain ConvexDomain::from_json(const nlohmann::json& j) {
    using namespace detail;
    check_keys(j, {"kind", "params"}, "domain");
    const auto kind = required(j, "kind", "domain").get<std::string>();
    const auto& p = required(j, "params", "domain");
    if (kind == "half_space") {
        check_keys(p, {"normal", "offset"}, "half_space");
        return half_space(vector_from_json(required(p, "normal", "half_space")),
                          number_from_json(required(p, "offset", "half_space"), 0.0));
    }
    if (kind == "box") {
        check_keys(p, {"lo", "hi"}, "box");
        return box(vector_from_json(required(p, "lo", "box"), -kInf), vector_from_json(required(p, "hi", "box"), kInf));
    }
    if (kind == "ball") {
        check_keys(p, {"center", "radius"}, "ball");
        return ball(vector_from_json(required(p, "center", "ball")),
                    number_from_json(required(p, "radius", "ball"), 0.0));
    }
    if (kind == "orthant") {
        check_keys(p, {"dimension"}, "orthant");
        return orthant(required(p, "dimension", "orthant").get<std::size_t>());
    }
    if (kind == "polyhedron") {
        check_keys(p, {"faces"}, "polyhedron");
        std::vector<HalfSpace> faces;
        for (const auto& f : required(p, "faces", "polyhedron")) {
            check_keys(f, {"normal", "offset"}, "polyhedron face");
            faces.push_back({vector_from_json(required(f, "normal", "face")),
                             number_from_json(required(f, "offset", "face"), 0.0)});
        }
        return polyhedron(std::move(faces));
    }
    throw ConfigError("unknown domain kind '" + kind + "'");
}

} // namespace rmv
