#pragma once

// Coefficients of the reflected self-stabilizing diffusion
//
//   dX = [b(t,X) + (f * mu_t)(X)] dt + sqrt(eps) sigma(t,X) dW - dk,
//
// their potentials, and a numerical falsification harness for the standing
// inequalities (one-sided Lipschitz drift, polynomial growth of the kernel,
// Hoelder time regularity of sigma, oddness of f).
//
// Sign conventions: b = grad B, and the interaction kernel is attractive with
// f = -grad F for a convex potential F.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "geometry.hpp"
#include "polynomial.hpp"
#include "rng.hpp"
#include "vecmath.hpp"

namespace rmv {

using VectorField = std::function<void(double t, std::span<const double> x, std::span<double> out)>;
// Row-major dim x noise_dim matrix.
using MatrixField = std::function<void(double t, std::span<const double> x, std::span<double> out)>;
using KernelField = std::function<void(std::span<const double> u, std::span<double> out)>;
using ScalarField = std::function<double(std::span<const double> x)>;

// Polynomial description of a model. When present, coefficient closures are
// compiled from it and the interaction can use exact moment expansion.
struct PolynomialForms {
    std::vector<Polynomial> drift;     // dim entries, in (t, x)
    std::vector<Polynomial> diffusion; // dim * noise_dim entries, row-major
    std::vector<Polynomial> kernel;    // dim entries, in x only
    std::optional<Polynomial> drift_potential;
    std::optional<Polynomial> kernel_potential;
};

struct ModelCoefficients {
    std::string id;
    std::size_t dim = 1;
    std::size_t noise_dim = 1;

    VectorField drift;
    MatrixField diffusion;
    KernelField kernel;
    ScalarField drift_potential;  // B with b = grad B; may be empty
    ScalarField kernel_potential; // F with f = -grad F; may be empty

    double lipschitz = 0.0;       // one-sided Lipschitz constant of b, Lipschitz of sigma
    double growth_constant = 1.0; // C
    double growth_order = 2.0;    // r > 1
    double holder_beta = 1.0;     // time regularity of sigma, in (0, 1]

    bool constant_diffusion = false;
    bool zero_kernel = false;
    Vector x0;

    std::optional<PolynomialForms> polynomial;
};

// Time-homogeneous model with identity diffusion, a stationary point and a
// uniformly contracting drift.
struct ExitModel {
    ModelCoefficients base;
    Vector x_tilde;
    double contraction = 1.0; // <x-y, b(x)-b(y)> <= -contraction |x-y|^2
};

// ---- construction from polynomials ------------------------------------------

struct PolynomialModelSpec {
    std::string id = "custom";
    std::size_t dim = 1;
    std::size_t noise_dim = 0; // 0 means dim
    std::vector<std::string> drift;
    std::vector<std::string> diffusion; // row-major; empty means identity
    std::vector<std::string> kernel;    // empty means f = 0
    std::string drift_potential;
    std::string kernel_potential;
    double lipschitz = 0.0;
    double growth_constant = 1.0;
    double growth_order = 2.0;
    double holder_beta = 1.0;
    Vector x0;
};

inline ModelCoefficients make_polynomial_model(const PolynomialModelSpec& spec) {
    const std::size_t d = spec.dim;
    if (d == 0) throw ConfigError("model dimension must be positive");
    const std::size_t dn = spec.noise_dim == 0 ? d : spec.noise_dim;
    PolynomialForms forms;

    if (spec.drift.size() != d) throw ConfigError("drift needs " + std::to_string(d) + " components");
    for (const auto& s : spec.drift) forms.drift.push_back(parse_polynomial(s, d));

    if (spec.diffusion.empty()) {
        if (dn != d) throw ConfigError("identity diffusion requires noise_dim == dim");
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < dn; ++j) forms.diffusion.push_back(Polynomial::constant(d, i == j ? 1.0 : 0.0));
    } else {
        if (spec.diffusion.size() != d * dn) throw ConfigError("diffusion needs dim*noise_dim entries");
        for (const auto& s : spec.diffusion) forms.diffusion.push_back(parse_polynomial(s, d));
    }

    if (spec.kernel.empty()) {
        for (std::size_t i = 0; i < d; ++i) forms.kernel.emplace_back(d);
    } else {
        if (spec.kernel.size() != d) throw ConfigError("kernel needs " + std::to_string(d) + " components");
        for (const auto& s : spec.kernel) {
            forms.kernel.push_back(parse_polynomial(s, d));
            if (forms.kernel.back().degree_in_t() != 0) throw ConfigError("kernel must not depend on t");
        }
    }
    if (!spec.drift_potential.empty()) forms.drift_potential = parse_polynomial(spec.drift_potential, d);
    if (!spec.kernel_potential.empty()) forms.kernel_potential = parse_polynomial(spec.kernel_potential, d);

    ModelCoefficients m;
    m.id = spec.id;
    m.dim = d;
    m.noise_dim = dn;
    m.lipschitz = spec.lipschitz;
    m.growth_constant = spec.growth_constant;
    m.growth_order = spec.growth_order;
    m.holder_beta = spec.holder_beta;
    m.x0 = spec.x0.empty() ? Vector(d, 0.0) : spec.x0;
    require_dim(m.x0.size(), d, "model x0");

    std::vector<CompiledPolynomial> b, s, f;
    for (const auto& p : forms.drift) b.emplace_back(p);
    for (const auto& p : forms.diffusion) s.emplace_back(p);
    for (const auto& p : forms.kernel) f.emplace_back(p);

    m.constant_diffusion = true;
    for (const auto& p : forms.diffusion) m.constant_diffusion = m.constant_diffusion && p.degree() == 0 && p.degree_in_t() == 0;
    m.zero_kernel = true;
    for (const auto& p : forms.kernel) m.zero_kernel = m.zero_kernel && p.is_zero();

    m.drift = [b](double t, std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < b.size(); ++i) out[i] = b[i](t, x);
    };
    m.diffusion = [s](double t, std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i](t, x);
    };
    m.kernel = [f](std::span<const double> u, std::span<double> out) {
        for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i](0.0, u);
    };
    if (forms.drift_potential) {
        CompiledPolynomial B(*forms.drift_potential);
        m.drift_potential = [B](std::span<const double> x) { return B(0.0, x); };
    }
    if (forms.kernel_potential) {
        CompiledPolynomial F(*forms.kernel_potential);
        m.kernel_potential = [F](std::span<const double> x) { return F(0.0, x); };
    }
    m.polynomial = std::move(forms);
    return m;
}

// ---- assumption probes --------------------------------------------------------

struct ProbeResult {
    std::string name;
    bool violated = false;
    double worst_margin = kInf; // bound minus observed; negative means violated
    Vector witness_x, witness_y;
    double witness_t = 0.0, witness_s = 0.0;
    std::size_t evaluations = 0;
};

struct AssumptionReport {
    std::vector<ProbeResult> probes;

    bool pass() const {
        for (const auto& p : probes)
            if (p.violated) return false;
        return true;
    }
    const ProbeResult* find(const std::string& name) const {
        for (const auto& p : probes)
            if (p.name == name) return &p;
        return nullptr;
    }
    nlohmann::json to_json() const {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& p : probes) {
            a.push_back({{"name", p.name},
                         {"status", p.violated ? "VIOLATED" : "PASS"},
                         {"worst_margin", p.worst_margin},
                         {"witness_x", p.witness_x},
                         {"witness_y", p.witness_y},
                         {"witness_t", p.witness_t},
                         {"witness_s", p.witness_s},
                         {"evaluations", p.evaluations}});
        }
        return {{"pass", pass()}, {"probes", a}};
    }
};

namespace detail {

class ProbeAccumulator {
public:
    explicit ProbeAccumulator(std::string name) { r_.name = std::move(name); }

    // margin = bound - observed; scale sets the round-off tolerance.
    void add(double margin, double scale, std::span<const double> x, std::span<const double> y, double t = 0.0,
             double s = 0.0) {
        ++r_.evaluations;
        if (!std::isfinite(margin)) margin = -kInf;
        const double tol = 1e-9 * (1.0 + std::abs(scale));
        if (margin < -tol) r_.violated = true;
        if (margin < r_.worst_margin) {
            r_.worst_margin = margin;
            r_.witness_x.assign(x.begin(), x.end());
            r_.witness_y.assign(y.begin(), y.end());
            r_.witness_t = t;
            r_.witness_s = s;
        }
    }
    ProbeResult result() const { return r_; }

private:
    ProbeResult r_;
};

// Deterministic probe pairs: uniform in the probe box projected into the
// domain, corner/boundary points, and near-coincident pairs.
struct ProbePairs {
    std::vector<Vector> x, y;
    std::vector<double> t, s;
};

inline ProbePairs make_probe_pairs(const ConvexDomain& domain, std::size_t n, std::uint64_t seed, double radius = 5.0) {
    const std::size_t d = domain.dimension();
    auto [lo, hi] = domain.probe_box(radius);
    const NormalStream rng(seed, stream_tag::probe_points);
    ProbePairs pp;
    auto uniform_point = [&](std::uint64_t idx) {
        Vector v(d);
        for (std::size_t k = 0; k < d; ++k) {
            // widen by 10% so that projection also produces boundary points
            const double w = hi[k] - lo[k];
            v[k] = lo[k] - 0.1 * w + 1.2 * w * rng.uniform(idx, k);
        }
        return domain.project(v).projected_point;
    };
    std::vector<Vector> corners;
    for (std::size_t mask = 0; mask < (std::size_t{1} << std::min<std::size_t>(d, 10)); ++mask) {
        Vector c(d);
        for (std::size_t k = 0; k < d; ++k) c[k] = (mask >> k) & 1u ? hi[k] : lo[k];
        corners.push_back(domain.project(c).projected_point);
    }
    for (std::size_t i = 0; i < n; ++i) {
        Vector a = uniform_point(2 * i), b;
        const std::size_t mode = i % 8;
        if (mode == 0 && !corners.empty()) {
            a = corners[(i / 8) % corners.size()];
            b = uniform_point(2 * i + 1);
        } else if (mode == 1) {
            b = a;
            for (std::size_t k = 0; k < d; ++k) b[k] += 1e-3 * (rng.uniform(2 * i + 1, k) - 0.5);
            b = domain.project(b).projected_point;
        } else {
            b = uniform_point(2 * i + 1);
        }
        pp.x.push_back(std::move(a));
        pp.y.push_back(std::move(b));
        pp.t.push_back(rng.uniform(i, 1000));
        pp.s.push_back(rng.uniform(i, 1001));
    }
    return pp;
}

inline double frob_diff(std::span<const double> a, std::span<const double> b) { return dist(a, b); }

} // namespace detail

inline AssumptionReport probe_assumptions(const ModelCoefficients& m, const ConvexDomain& domain, std::size_t n_probes,
                                          std::uint64_t seed) {
    if (n_probes < 1) throw ConfigError("n_probes must be >= 1");
    require_dim(domain.dimension(), m.dim, "probe_assumptions domain");
    const std::size_t d = m.dim, dn = m.noise_dim;
    const auto pp = detail::make_probe_pairs(domain, n_probes, seed);
    const double L = m.lipschitz, C = m.growth_constant, r = m.growth_order, beta = m.holder_beta;

    detail::ProbeAccumulator odd("kernel_odd"), growth("kernel_growth"), lip("kernel_local_lipschitz"),
        osl("drift_one_sided_lipschitz"), slip("diffusion_lipschitz"), hold("diffusion_time_holder");

    Vector fx(d), fy(d), fz(d), bx(d), by(d), sx(d * dn), sy(d * dn), zero(d, 0.0), neg(d);
    m.kernel(zero, fz);
    odd.add(-norm(fz), 0.0, zero, zero);

    // Kernel inequalities hold on all of R^d; probe differences of domain points
    // and the points themselves.
    for (std::size_t i = 0; i < pp.x.size(); ++i) {
        const Vector u = sub(pp.x[i], pp.y[i]);
        const Vector& v = pp.x[i];
        for (std::size_t k = 0; k < d; ++k) neg[k] = -u[k];
        m.kernel(u, fx);
        m.kernel(neg, fy);
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += (fx[k] + fy[k]) * (fx[k] + fy[k]);
        odd.add(-std::sqrt(s), norm(fx), u, neg);

        const double nu = norm(u);
        growth.add(C * (1.0 + std::pow(nu, r)) - norm(fx), norm(fx), u, u);

        m.kernel(v, fy);
        const double nv = norm(v);
        const double lhs = dist(fx, fy);
        const double rhs = C * dist(u, v) * (1.0 + std::pow(nu, r - 1.0) + std::pow(nv, r - 1.0));
        lip.add(rhs - lhs, lhs, u, v);
    }

    for (std::size_t i = 0; i < pp.x.size(); ++i) {
        const auto& x = pp.x[i];
        const auto& y = pp.y[i];
        const double t = pp.t[i], s = pp.s[i];
        m.drift(t, x, bx);
        m.drift(t, y, by);
        double inner = 0.0;
        for (std::size_t k = 0; k < d; ++k) inner += (bx[k] - by[k]) * (x[k] - y[k]);
        const double dxy2 = dist2(x, y);
        osl.add(L * dxy2 - inner, inner, x, y, t);

        m.diffusion(t, x, sx);
        m.diffusion(t, y, sy);
        const double sd = detail::frob_diff(sx, sy);
        slip.add(L * std::sqrt(dxy2) - sd, sd, x, y, t);

        m.diffusion(s, x, sy);
        const double td = detail::frob_diff(sx, sy);
        hold.add(L * std::pow(std::abs(t - s), beta) - td, td, x, x, t, s);
    }

    AssumptionReport rep;
    for (auto* a : {&odd, &growth, &lip, &osl, &slip, &hold}) rep.probes.push_back(a->result());
    return rep;
}

// Extra probes for exit-time models: kernel monotonicity, drift contraction,
// and the stationary point.
inline AssumptionReport probe_exit_assumptions(const ExitModel& em, const ConvexDomain& domain, std::size_t n_probes,
                                               std::uint64_t seed) {
    const auto& m = em.base;
    const std::size_t d = m.dim;
    AssumptionReport rep = probe_assumptions(m, domain, n_probes, seed);
    const auto pp = detail::make_probe_pairs(domain, n_probes, derive_seed(seed, 1));

    detail::ProbeAccumulator mono("kernel_monotone"), contr("drift_contraction"), stat("stationary_point");
    Vector fx(d), fy(d), bx(d), by(d);
    for (std::size_t i = 0; i < pp.x.size(); ++i) {
        const Vector u = sub(pp.x[i], pp.y[i]);
        const Vector& v = pp.x[i];
        m.kernel(u, fx);
        m.kernel(v, fy);
        double inner = 0.0;
        for (std::size_t k = 0; k < d; ++k) inner += (u[k] - v[k]) * (fx[k] - fy[k]);
        mono.add(-inner, inner, u, v);

        m.drift(0.0, pp.x[i], bx);
        m.drift(0.0, pp.y[i], by);
        double ib = 0.0;
        for (std::size_t k = 0; k < d; ++k) ib += (pp.x[i][k] - pp.y[i][k]) * (bx[k] - by[k]);
        contr.add(-em.contraction * dist2(pp.x[i], pp.y[i]) - ib, ib, pp.x[i], pp.y[i]);
    }
    m.drift(0.0, em.x_tilde, bx);
    stat.add(1e-10 - norm(bx), 0.0, em.x_tilde, em.x_tilde);
    stat.add(domain.contains_open(em.x_tilde) ? 0.0 : -1.0, 0.0, em.x_tilde, em.x_tilde);

    for (auto* a : {&mono, &contr, &stat}) rep.probes.push_back(a->result());
    return rep;
}

// ---- finite-difference checks ------------------------------------------------

// Max relative error between grad(potential)*sign and the field at the points.
inline double gradient_consistency(const ScalarField& potential, double sign,
                                   const std::function<void(std::span<const double>, std::span<double>)>& field,
                                   const std::vector<Vector>& points, double h = 1e-5) {
    double worst = 0.0;
    for (const auto& x : points) {
        const std::size_t d = x.size();
        Vector g(d), fx(d), xp = x, xm = x;
        for (std::size_t k = 0; k < d; ++k) {
            xp[k] = x[k] + h;
            xm[k] = x[k] - h;
            g[k] = sign * (potential(xp) - potential(xm)) / (2.0 * h);
            xp[k] = xm[k] = x[k];
        }
        field(x, fx);
        const double err = dist(g, fx) / std::max(1.0, norm(fx));
        worst = std::max(worst, err);
    }
    return worst;
}

// Log-log slope of |f(s u)| between |x| = lo and |x| = hi along direction u.
inline double observed_growth_order(const KernelField& f, std::span<const double> direction, double lo = 1e2,
                                    double hi = 1e3) {
    const std::size_t d = direction.size();
    const double n = norm(direction);
    Vector a(d), b(d), fa(d), fb(d);
    for (std::size_t k = 0; k < d; ++k) {
        a[k] = lo * direction[k] / n;
        b[k] = hi * direction[k] / n;
    }
    f(a, fa);
    f(b, fb);
    return std::log(norm(fb) / norm(fa)) / std::log(hi / lo);
}

// ---- catalog ----------------------------------------------------------------

struct CatalogModel {
    ModelCoefficients model;
    ConvexDomain domain;
    std::optional<Vector> x_tilde;
    std::optional<double> contraction;
};

inline CatalogModel make_ou_cubic_1d() {
    PolynomialModelSpec s;
    s.id = "ou-cubic-1d";
    s.dim = 1;
    s.drift = {"-2*(x-1)"};
    s.kernel = {"-0.5*x^3"};
    s.drift_potential = "-(x-1)^2";
    s.kernel_potential = "x^4/8";
    s.lipschitz = 2.0;
    s.growth_constant = 1.0;
    s.growth_order = 3.0;
    s.x0 = {2.0};
    return {make_polynomial_model(s), ConvexDomain::interval(-2.0, 4.0), Vector{1.0}, 2.0};
}

inline CatalogModel make_ou_1d() {
    PolynomialModelSpec s;
    s.id = "ou-1d";
    s.dim = 1;
    s.drift = {"-2*(x-1)"};
    s.drift_potential = "-(x-1)^2";
    s.kernel_potential = "0";
    s.lipschitz = 2.0;
    s.growth_order = 2.0;
    s.x0 = {2.0};
    return {make_polynomial_model(s), ConvexDomain::interval(-2.0, 4.0), Vector{1.0}, 2.0};
}

inline CatalogModel make_pure_reflection() {
    PolynomialModelSpec s;
    s.id = "pure-reflection";
    s.dim = 1;
    s.drift = {"0"};
    s.drift_potential = "0";
    s.kernel_potential = "0";
    s.lipschitz = 0.0;
    s.growth_order = 2.0;
    s.x0 = {0.5};
    return {make_polynomial_model(s), ConvexDomain::interval(0.0, 1.0), std::nullopt, std::nullopt};
}

inline CatalogModel make_quartic_2d() {
    PolynomialModelSpec s;
    s.id = "quartic-2d";
    s.dim = 2;
    s.drift = {"-2*(x1-0.5)", "-2*x2"};
    s.drift_potential = "-((x1-0.5)^2 + x2^2)";
    s.kernel = {"-x1*(x1^2+x2^2)", "-x2*(x1^2+x2^2)"};
    s.kernel_potential = "(x1^2+x2^2)^2/4";
    s.lipschitz = 2.0;
    s.growth_constant = 3.0;
    s.growth_order = 3.0;
    s.x0 = {2.0, 1.5};
    return {make_polynomial_model(s), ConvexDomain::box({-3.0, -3.0}, {3.0, 3.0}), Vector{0.5, 0.0}, 2.0};
}

inline std::vector<CatalogModel> builtin_models() {
    return {make_ou_cubic_1d(), make_ou_1d(), make_pure_reflection(), make_quartic_2d()};
}

inline CatalogModel find_model(const std::string& id) {
    for (auto& c : builtin_models())
        if (c.model.id == id) return c;
    throw ConfigError("unknown model id '" + id + "'");
}

inline ExitModel to_exit_model(const CatalogModel& c) {
    if (!c.x_tilde || !c.contraction) throw ConfigError("model '" + c.model.id + "' has no stationary point");
    return {c.model, *c.x_tilde, *c.contraction};
}

// ---- JSON model description ---------------------------------------------------
//
// {"id": "...", "dim": 1, "drift": ["-2*(x-1)"], "kernel": ["-0.5*x^3"],
//  "diffusion": ["1"], "noise_dim": 1, "drift_potential": "...",
//  "kernel_potential": "...", "L": 2, "C": 1, "r": 3, "beta": 1, "x0": [2]}

inline PolynomialModelSpec model_spec_from_json(const nlohmann::json& j) {
    detail::check_keys(j,
                       {"id", "dim", "noise_dim", "drift", "diffusion", "kernel", "drift_potential",
                        "kernel_potential", "L", "C", "r", "beta", "x0"},
                       "model");
    PolynomialModelSpec s;
    s.id = j.value("id", std::string("custom"));
    s.dim = detail::required(j, "dim", "model").get<std::size_t>();
    s.noise_dim = j.value("noise_dim", std::size_t{0});
    s.drift = detail::required(j, "drift", "model").get<std::vector<std::string>>();
    if (j.contains("diffusion")) s.diffusion = j.at("diffusion").get<std::vector<std::string>>();
    if (j.contains("kernel")) s.kernel = j.at("kernel").get<std::vector<std::string>>();
    s.drift_potential = j.value("drift_potential", std::string());
    s.kernel_potential = j.value("kernel_potential", std::string());
    s.lipschitz = j.value("L", 0.0);
    s.growth_constant = j.value("C", 1.0);
    s.growth_order = j.value("r", 2.0);
    s.holder_beta = j.value("beta", 1.0);
    if (s.growth_order <= 1.0) throw ConfigError("model r must be > 1");
    if (!(s.holder_beta > 0.0 && s.holder_beta <= 1.0)) throw ConfigError("model beta must be in (0, 1]");
    if (j.contains("x0")) s.x0 = detail::vector_from_json(j.at("x0"));
    return s;
}

} // namespace rmv
