#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace rmv;
using testing_helpers::model_1d;

namespace {

ControlPath linear_control(std::size_t dn, double dt, double T, std::vector<double> slope) {
    return ControlPath::from_function(dn, dt, T, [&](double t, std::span<double> out) {
        for (std::size_t m = 0; m < dn; ++m) out[m] = slope[m] * t;
    });
}

double sup_gap_on_common_nodes(const PathGrid& coarse, const PathGrid& fine) {
    double s = 0.0;
    for (std::size_t k = 0; k <= coarse.steps(); ++k) s = std::max(s, dist(coarse.at(k), fine.at(2 * k)));
    return s;
}

} // namespace

TEST(Psi, ZeroDriftIsConstant) {
    const auto p = psi(model_1d("0", "", 0.3), ConvexDomain::whole_space(1), Vector{0.3}, 0.01, 1.0);
    for (std::size_t k = 0; k <= p.steps(); ++k) EXPECT_EQ(p.at(k)[0], 0.3);
}

TEST(Psi, LinearOdeMatchesClosedFormAtFirstOrder) {
    const auto m = model_1d("-2*(x-1)", "", 3.0);
    double err[2];
    const double dts[2] = {1e-3, 5e-4};
    for (int j = 0; j < 2; ++j) {
        const auto p = psi(m, ConvexDomain::whole_space(1), Vector{3.0}, dts[j], 1.0);
        err[j] = 0.0;
        for (std::size_t k = 0; k <= p.steps(); ++k)
            err[j] = std::max(err[j], std::abs(p.at(k)[0] - (1.0 + 2.0 * std::exp(-2.0 * k * dts[j]))));
    }
    EXPECT_LT(err[0], 4.0 * dts[0]);
    EXPECT_NEAR(err[0] / err[1], 2.0, 0.1);
}

TEST(Psi, StickyAtBoundaryWithLocalTime) {
    const auto p = psi(model_1d("-1", "", 0.5), ConvexDomain::box({0.0}, {kInf}), Vector{0.5}, 1e-3, 1.0);
    EXPECT_NEAR(p.at(400)[0], 0.1, 1e-12);
    EXPECT_EQ(p.at(500)[0], 0.0);
    EXPECT_EQ(p.at(1000)[0], 0.0);
    EXPECT_NEAR(p.local_time[1000], 0.5, 1e-9);
    EXPECT_NEAR(p.local_time[750] - p.local_time[500], 0.25, 1e-9);
}

TEST(Skeleton, ZeroControlReproducesPsi) {
    const auto c = make_ou_cubic_1d();
    const auto h = ControlPath::zero(1, 1e-3, 1.0);
    const auto H = skeleton(c.model, c.domain, c.model.x0, h);
    const auto p = psi(c.model, c.domain, c.model.x0, 1e-3, 1.0);
    EXPECT_EQ(H.values, p.values);
}

TEST(Skeleton, PureControlIntegration) {
    const auto m = model_1d("0", "", 0.2);
    const auto H = skeleton(m, ConvexDomain::whole_space(1), Vector{0.2}, linear_control(1, 1e-2, 1.0, {1.5}));
    for (std::size_t k = 0; k <= H.steps(); ++k) EXPECT_NEAR(H.at(k)[0], 0.2 + 1.5 * k * 1e-2, 1e-12);
}

TEST(Skeleton, FirstOrderSelfConvergence) {
    const auto c = make_ou_cubic_1d();
    std::vector<PathGrid> runs;
    for (double dt : {1.0 / 256, 1.0 / 512, 1.0 / 1024})
        runs.push_back(skeleton(c.model, c.domain, c.model.x0, linear_control(1, dt, 1.0, {1.0})));
    const double e1 = sup_gap_on_common_nodes(runs[0], runs[1]), e2 = sup_gap_on_common_nodes(runs[1], runs[2]);
    EXPECT_NEAR(e1 / e2, 2.0, 0.3);
}

TEST(Skeleton, StaysInDomain) {
    const auto c = make_ou_cubic_1d();
    const auto h = ControlPath::from_function(1, 1e-3, 1.0, [](double t, std::span<double> out) { out[0] = 60.0 * t; });
    const auto H = skeleton(c.model, c.domain, c.model.x0, h);
    for (std::size_t k = 0; k <= H.steps(); ++k) EXPECT_TRUE(c.domain.contains(H.at(k)));
    EXPECT_GT(H.local_time.back(), 0.0);
}

TEST(EulerSkeleton, ConstantSigmaAndCellLinearControlIsExact) {
    const auto c = make_ou_cubic_1d();
    // Linear on each cell of width T/4.
    const auto h = ControlPath::from_function(1, 1.0 / 256, 1.0, [](double t, std::span<double> out) {
        out[0] = t < 0.5 ? t : 1.0 - t;
    });
    const auto H = skeleton(c.model, c.domain, c.model.x0, h);
    for (std::size_t n : {4, 16, 64}) EXPECT_LT(sup_distance(euler_skeleton(c.model, c.domain, c.model.x0, h, n), H), 1e-13);
}

TEST(EulerSkeleton, FinestMeshMatchesSkeleton) {
    PolynomialModelSpec s;
    s.drift = {"-x"};
    s.diffusion = {"1+0.5*x^2"};
    s.x0 = {0.5};
    const auto m = make_polynomial_model(s);
    const auto h = ControlPath::from_function(1, 1.0 / 128, 1.0, [](double t, std::span<double> out) { out[0] = std::sin(5 * t); });
    const auto dom = ConvexDomain::interval(-1, 1);
    EXPECT_LT(sup_distance(euler_skeleton(m, dom, Vector{0.5}, h, 128), skeleton(m, dom, Vector{0.5}, h)), 1e-14);
    EXPECT_THROW(euler_skeleton(m, dom, Vector{0.5}, h, 3), ConfigError);
}

TEST(EulerSkeleton, GapShrinksWithMeshForStateDependentSigma) {
    PolynomialModelSpec s;
    s.drift = {"-2*(x-1)"};
    s.diffusion = {"1+0.25*x^2"};
    s.x0 = {2.0};
    const auto m = make_polynomial_model(s);
    const auto dom = ConvexDomain::interval(-2, 4);
    const auto h = ControlPath::from_function(1, 1.0 / 4096, 1.0, [](double t, std::span<double> out) {
        out[0] = std::sin(2 * std::numbers::pi * t) / std::numbers::pi;
    });
    const auto H = skeleton(m, dom, Vector{2.0}, h);
    double prev = 1e300;
    for (std::size_t n : {4, 16, 64, 256}) {
        const double g = sup_distance(euler_skeleton(m, dom, Vector{2.0}, h, n), H);
        EXPECT_LT(g, prev);
        prev = g;
    }
    EXPECT_LT(prev, 1e-2);
}

TEST(Action, ClosedForms) {
    EXPECT_EQ(action(ControlPath::zero(1, 0.01, 1.0)), 0.0);
    EXPECT_NEAR(action(linear_control(1, 0.01, 2.0, {3.0})), 9.0 * 2.0 / 2.0, 1e-12);
    EXPECT_NEAR(action(linear_control(2, 0.01, 1.0, {1.0, 1.0})), 1.0, 1e-13);
    ControlPath bad = ControlPath::zero(1, 0.1, 1.0);
    bad.values[0] = 0.5;
    EXPECT_THROW(action(bad), ConfigError);
}

TEST(Action, NonnegativeAndZeroOnlyForZeroControl) {
    std::mt19937_64 gen(6);
    std::normal_distribution<double> z(0.0, 1.0);
    for (int rep = 0; rep < 200; ++rep) {
        ControlPath h = ControlPath::zero(2, 0.05, 1.0);
        const std::size_t k = 1 + rep % h.steps();
        h.values[2 * k + rep % 2] = rep < 100 ? z(gen) : 1e-150;
        EXPECT_GT(action(h), 0.0);
    }
}

TEST(Concentration, NoiselessRunTracksSkeleton) {
    const auto c = make_ou_cubic_1d();
    ConcentrationOptions o;
    o.paths = 64;
    const auto rows = concentration_check(c.model, c.domain, c.model.x0, {0.0}, o);
    EXPECT_LT(rows[0].sup_mean, 1e-12);
}

TEST(Concentration, LinearInEpsilonWithFittedConstant) {
    const auto c = make_ou_cubic_1d();
    ConcentrationOptions o;
    o.paths = 2048;
    o.seed = 31;
    const auto rows = concentration_check(c.model, c.domain, c.model.x0, {0.2, 0.1, 0.05}, o);
    EXPECT_NEAR(rows[1].sup_mean / rows[0].sup_mean, 0.5, 0.2);
    EXPECT_NEAR(rows[2].sup_mean / rows[1].sup_mean, 0.5, 0.2);
    // Fit c from the outer levels, check the middle one against eps T e^c.
    const double chat = std::max(std::log(rows[0].sup_mean / 0.2), std::log(rows[2].sup_mean / 0.05));
    EXPECT_LE(rows[1].sup_mean, 0.1 * std::exp(chat) + 3 * rows[1].sup_stderr);
    EXPECT_THROW(concentration_check(c.model, c.domain, c.model.x0, {0.1, 0.2}, o), ConfigError);
}
