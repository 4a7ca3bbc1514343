#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace rmv;
using testing_helpers::model_1d;

TEST(GNorm, ClosedFormCases) {
    const Vector x0{0.0};
    std::vector<ProbePoint> probes{{0.0, {0.0}}, {0.5, {1.0}}, {1.0, {10.0}}};
    EXPECT_EQ(gnorm(GFunction::zero(1), probes, 2.0, x0), 0.0);
    const auto one = GFunction::from_field(1, [&](double, std::span<const double> x, std::span<double> out) {
        out[0] = 1.0 + std::pow(std::abs(x[0] - x0[0]), 2.0);
    });
    EXPECT_DOUBLE_EQ(gnorm(one, probes, 2.0, x0), 1.0);
    const auto id = GFunction::from_field(1, [](double, std::span<const double> x, std::span<double> out) { out[0] = x[0]; });
    // max(0, 1/2, 10/101)
    EXPECT_DOUBLE_EQ(gnorm(id, probes, 2.0, x0), 0.5);
}

TEST(Gamma, ZeroKernelGivesZero) {
    const auto m = model_1d("-x", "", 0.0);
    const auto g = GFunction::from_field(1, [](double, std::span<const double> x, std::span<double> out) { out[0] = x[0]; });
    GammaOptions o;
    o.M = 64;
    o.dt = 0.01;
    o.T = 0.2;
    const auto r = gamma_apply(g, m, ConvexDomain::whole_space(1), o);
    Vector v(1);
    for (double x : {-3.0, 0.0, 2.5}) {
        r.g(0.1, Vector{x}, v);
        EXPECT_EQ(v[0], 0.0);
    }
}

TEST(Gamma, DegenerateLawGivesShiftedKernel) {
    const auto m = model_1d("0", "-0.5*x^3", 0.3);
    GammaOptions o;
    o.M = 16;
    o.dt = 0.01;
    o.T = 0.5;
    o.epsilon = 0.0;
    const auto r = gamma_apply(GFunction::zero(1), m, ConvexDomain::whole_space(1), o);
    Vector v(1);
    for (double t : {0.0, 0.25, 0.5})
        for (double x : {-1.0, 0.3, 2.0}) {
            r.g(t, Vector{x}, v);
            EXPECT_NEAR(v[0], -0.5 * std::pow(x - 0.3, 3), 1e-12);
        }
}

// Oracle: independent reflected Euler simulation of dX = b dt + sqrt(eps) dW on
// [-2, 4] with a different generator, then the sample mean of f(x~ - X_T).
TEST(Gamma, MatchesIndependentTwoStageEstimate) {
    const auto c = make_ou_cubic_1d();
    GammaOptions o;
    o.M = 4096;
    o.dt = 1e-3;
    o.T = 1.0;
    o.epsilon = 0.1;
    o.seed = 21;
    o.full_snapshot_times = {1.0};
    const auto r = gamma_apply(GFunction::zero(1), c.model, c.domain, o);
    Vector v(1);
    r.g(1.0, Vector{1.0}, v);
    auto f = [](double u) { return -0.5 * u * u * u; };
    std::vector<double> ours;
    for (double x : r.full.at(0).positions) ours.push_back(f(1.0 - x));
    const auto ms_ours = mean_stderr(ours);
    EXPECT_NEAR(v[0], ms_ours.mean, 1e-12);

    std::mt19937_64 gen(12345);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<double> ref;
    for (int m = 0; m < 4096; ++m) {
        double x = 2.0;
        for (int k = 0; k < 1000; ++k) {
            x += -2.0 * (x - 1.0) * 1e-3 + std::sqrt(0.1 * 1e-3) * z(gen);
            x = std::clamp(x, -2.0, 4.0);
        }
        ref.push_back(f(1.0 - x));
    }
    const auto ms_ref = mean_stderr(ref);
    const double se = std::hypot(ms_ours.stderr_, ms_ref.stderr_);
    EXPECT_LE(std::abs(ms_ours.mean - ms_ref.mean), 3.0 * se);
}

TEST(Gamma, PreservesOneSidedLipschitz) {
    const auto c = make_ou_cubic_1d();
    GammaOptions o;
    o.M = 512;
    o.dt = 1e-2;
    o.epsilon = 0.5;
    const auto r = gamma_apply(GFunction::zero(1), c.model, c.domain, o);
    std::mt19937_64 gen(2);
    std::uniform_real_distribution<double> u(-2.0, 4.0), t(0.0, 1.0);
    Vector gx(1), gy(1);
    for (int i = 0; i < 2000; ++i) {
        const double s = t(gen), x = u(gen), y = u(gen);
        r.g(s, Vector{x}, gx);
        r.g(s, Vector{y}, gy);
        // f = -0.5 x^3 is nonincreasing, so the kernel part contributes no expansion.
        EXPECT_LE((x - y) * (gx[0] - gy[0]), 1e-9 * (1 + std::abs(x - y)));
    }
}

TEST(FixedPoint, ZeroKernelConvergesAtOnce) {
    const auto m = model_1d("-x", "", 0.5);
    FixedPointOptions o;
    o.gamma.M = 64;
    o.gamma.dt = 0.01;
    o.gamma.T = 0.5;
    const auto r = fixed_point(m, ConvexDomain::whole_space(1), o);
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.history.size(), 1u);
    EXPECT_EQ(r.history[0].distance, 0.0);
}

TEST(FixedPoint, DistancesDecreaseOnCatalogModel) {
    const auto c = make_ou_cubic_1d();
    FixedPointOptions o;
    o.gamma.M = 4096;
    o.gamma.epsilon = 0.1;
    o.gamma.seed = 8;
    o.tol = 1e-4;
    o.max_iter = 4;
    o.throw_on_failure = false;
    o.x_tilde = c.x_tilde;
    const auto r = fixed_point(c.model, c.domain, o);
    ASSERT_GE(r.history.size(), 3u);
    for (std::size_t k = 1; k < r.history.size(); ++k) EXPECT_LT(r.history[k].distance, r.history[k - 1].distance);
}

TEST(FixedPoint, NoiselessLimitIsKernelAroundSkeleton) {
    const auto c = make_ou_cubic_1d();
    FixedPointOptions o;
    o.gamma.M = 2;
    o.gamma.epsilon = 0.0;
    o.gamma.dt = 1e-3;
    o.tol = 1e-10;
    const auto r = fixed_point(c.model, c.domain, o);
    EXPECT_TRUE(r.converged);
    const auto ps = psi(c.model, c.domain, c.model.x0, 1e-3, 1.0);
    Vector v(1);
    double worst = 0.0;
    for (std::size_t k = 0; k <= ps.steps(); k += 10)
        for (double x : {-1.0, 0.5, 1.0, 3.0}) {
            r.g(k * 1e-3, Vector{x}, v);
            worst = std::max(worst, std::abs(v[0] + 0.5 * std::pow(x - ps.at(k)[0], 3)));
        }
    EXPECT_LT(worst, 10 * 1e-3);
}

TEST(FixedPoint, NonConvergenceCarriesHistory) {
    const auto c = make_ou_cubic_1d();
    FixedPointOptions o;
    o.gamma.M = 32;
    o.gamma.dt = 1e-2;
    o.max_iter = 2;
    o.tol = 1e-12;
    try {
        fixed_point(c.model, c.domain, o);
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_NE(std::string(e.what()).find("distances"), std::string::npos) << e.what();
    }
}

TEST(ProbeGrid, ContainsAnchorsAndStaysInside) {
    const auto c = make_quartic_2d();
    const auto p = make_probe_grid(c.domain, c.model.x0, c.x_tilde, 1.0, 1e-3, 11);
    std::size_t at_x0 = 0;
    for (const auto& q : p) {
        EXPECT_TRUE(c.domain.contains(q.x, 1e-12));
        at_x0 += q.x == c.model.x0;
    }
    EXPECT_EQ(at_x0, 11u);
}
