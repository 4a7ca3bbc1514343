#include <cmath>

#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace rmv;
using testing_helpers::model_1d;

namespace {

ExitScenario scenario_1d(const ModelCoefficients& m, double x_tilde, double L, double x0, double kappa = 0.5,
                         ConvexDomain outer = ConvexDomain::interval(-2, 4)) {
    return make_exit_scenario({m, {x_tilde}, L}, std::move(outer), ConvexDomain::interval(0, 2), {x0}, kappa, 2.0);
}

} // namespace

TEST(Stability, ContractingFlowStaysInside) {
    const auto s = scenario_1d(model_1d("-2*(x-1)", "", 1.5), 1.0, 2.0, 1.5);
    EXPECT_TRUE(stability_probe(s, StabilityField::b, 64, 10.0, 1e-3).stable());
    const auto c = kramers_scenario();
    EXPECT_TRUE(stability_probe(c, StabilityField::b_plus_f_centered, 64, 10.0, 1e-3).stable());
}

TEST(Stability, RightwardDriftEscapesOnTime) {
    // b = 1 has no stationary point; the scenario is built for probing only.
    ExitScenario s = scenario_1d(model_1d("-2*(x-1)", "", 1.5), 1.0, 2.0, 1.5);
    s.model.base = model_1d("1", "", 1.5);
    const auto rep = stability_probe(s, StabilityField::b, 32, 5.0, 1e-3);
    EXPECT_EQ(rep.escapes, rep.starts);
    for (std::size_t i = 0; i < rep.starts; ++i)
        EXPECT_NEAR(rep.escape_time[i], 2.0 - rep.start_points[i][0], 2e-3);
}

TEST(MomentClock, StartAtStationaryPoint) {
    const auto c = kramers_scenario(1.0);
    ExitOptions o;
    o.paths = 64;
    const auto mc = moment_clock(c, 0.05, 1.0, o);
    EXPECT_EQ(mc.xi.front(), 0.0);
    ASSERT_TRUE(mc.t_hat.has_value());
    EXPECT_EQ(*mc.t_hat, 0.0);
}

TEST(MomentClock, BoundsHoldOnCatalogScenario) {
    const auto c = find_model("ou-cubic-1d");
    const auto s = make_exit_scenario(to_exit_model(c), c.domain, ConvexDomain::interval(0, 2), {1.9}, 0.5, 2.0);
    ExitOptions o;
    o.paths = 2048;
    o.seed = 3;
    const auto mc = moment_clock(s, 0.05, 3.0, o);
    // (d eps (r-1) / (2L))^{r/2} = 0.05 / 4
    EXPECT_TRUE(mc.bounds.hypothesis);
    EXPECT_DOUBLE_EQ(std::max(0.81, 0.0125), mc.bounds.bound_sup);
    EXPECT_TRUE(mc.bounds.pass_sup) << mc.bounds.to_json().dump();
    EXPECT_TRUE(mc.bounds.pass_clock) << mc.bounds.to_json().dump();
    EXPECT_LE(mc.xi.back(), 0.0125 + 3 * mc.xi_stderr.back());
}

TEST(MomentClock, NoiselessLinearDecayRate) {
    const auto c = find_model("ou-1d");
    const auto s = make_exit_scenario(to_exit_model(c), c.domain, ConvexDomain::interval(0, 2), {1.9}, 0.5, 2.0);
    ExitOptions o;
    o.paths = 4;
    o.dt = 1e-4;
    o.xi_stride = 1;
    const auto mc = moment_clock(s, 0.0, 1.0, o);
    // xi(t) = |x0 - x~|^2 e^{-2 L t}; log-slope -rL = -4.
    const std::size_t k = mc.times.size() - 1;
    const double slope = std::log(mc.xi[k] / mc.xi[0]) / (mc.times[k] - mc.times[0]);
    EXPECT_NEAR(slope / -4.0, 1.0, 0.05);
}

TEST(ExitTime, StartOutsideExitsImmediately) {
    ExitScenario s = kramers_scenario();
    s.x0 = {3.0};
    ExitOptions o;
    o.paths = 16;
    const auto r = exit_time_mc(s, 0.5, o);
    for (double t : r.tau) EXPECT_EQ(t, 0.0);
    EXPECT_EQ(r.censored_count, 0u);
}

TEST(ExitTime, BrownianIntervalMatchesDynkin) {
    const auto m = model_1d("0", "", 0.0);
    const auto s = make_exit_scenario({m, {0.0}, 0.0}, ConvexDomain::whole_space(1), ConvexDomain::interval(-1, 1),
                                      {0.0}, 0.5, 2.0);
    ExitOptions o;
    o.dt = 1e-4;
    o.paths = 4096;
    o.t_cap = 50;
    o.seed = 77;
    const auto r = exit_time_mc(s, 1.0, o);
    EXPECT_EQ(r.censored_count, 0u);
    // E tau = (a^2 - x0^2) / eps = 1
    EXPECT_NEAR(r.mean_tau, 1.0, 3 * r.stderr_tau);
}

TEST(ExitTime, CensoringIsReported) {
    const auto c = kramers_scenario();
    ExitOptions o;
    o.paths = 64;
    o.t_cap = 1.0;
    const auto r = exit_time_mc(c, 0.2, o);
    EXPECT_EQ(r.censored_count, r.tau.size());
    EXPECT_TRUE(r.too_small_for_budget);
    for (double t : r.tau) EXPECT_EQ(t, 1.0);
}

TEST(Coupling, ZeroKernelGivesZeroGap) {
    const auto c = find_model("ou-1d");
    const auto s = make_exit_scenario(to_exit_model(c), c.domain, ConvexDomain::interval(0, 2), {1.55}, 0.5, 2.0);
    CouplingOptions co;
    co.run.paths = 256;
    co.run.t_cap = 5;
    const auto r = coupling_gap(s, 0.3, co);
    EXPECT_GT(r.coupled, 0u);
    EXPECT_EQ(r.mean_sup_gap2, 0.0);
    EXPECT_EQ(r.prob_exceed_eta_kappa, 0.0);
}

TEST(Coupling, GapShrinksWithKappaAndStaysBelowEta) {
    double prev = 1e300;
    for (double kappa : {0.5, 0.25, 0.125}) {
        const auto s = kramers_scenario(1.55, kappa);
        CouplingOptions co;
        co.run.paths = 512;
        co.run.t_cap = 5;
        co.run.seed = 5;
        const auto r = coupling_gap(s, 0.1, co);
        EXPECT_LT(r.mean_sup_gap2, prev) << "kappa " << kappa;
        prev = r.mean_sup_gap2;
        if (kappa == 0.25) {
            EXPECT_LE(r.prob_exceed_eta_kappa, r.eta_kappa);
        }
    }
}

TEST(ExitCost, EndpointEvaluation) {
    const auto no_f = scenario_1d(model_1d("-2*(x-1)", "", 1.5, "-(x-1)^2", "0", 2.0), 1.0, 2.0, 1.5);
    EXPECT_DOUBLE_EQ(exit_cost(no_f, CostConvention::classical).value, 1.0);
    const auto c = kramers_scenario();
    EXPECT_DOUBLE_EQ(exit_cost(c, CostConvention::classical).value, 1.125);
    EXPECT_DOUBLE_EQ(exit_cost(c, CostConvention::paper).value, -0.875);
}

TEST(ExitCost, SymmetricBallHasFlatBoundaryCost) {
    PolynomialModelSpec sp;
    sp.dim = 2;
    sp.drift = {"-2*x1", "-2*x2"};
    sp.drift_potential = "-(x1^2+x2^2)";
    sp.kernel_potential = "0";
    sp.lipschitz = 2;
    sp.x0 = {0.2, 0.0};
    const auto m = make_polynomial_model(sp);
    const auto s = make_exit_scenario({m, {0.0, 0.0}, 2.0}, ConvexDomain::ball({0, 0}, 3.0),
                                      ConvexDomain::ball({0, 0}, 1.0), {0.2, 0.0}, 0.5, 2.0);
    const auto cost = exit_cost(s, CostConvention::classical);
    EXPECT_NEAR(cost.value, 1.0, 1e-12);
    for (double a = 0; a < 6.28; a += 0.1)
        EXPECT_NEAR(-m.drift_potential(Vector{std::cos(a), std::sin(a)}), cost.value, 1e-12);
}

TEST(ExitCost, NonnegativeOnShippedScenarios) {
    for (const auto& c : builtin_models()) {
        if (!c.x_tilde) continue;
        const auto [lo, hi] = c.domain.bounding_box();
        Vector ilo(c.model.dim), ihi(c.model.dim);
        for (std::size_t k = 0; k < c.model.dim; ++k) {
            ilo[k] = (*c.x_tilde)[k] - 0.5 * std::min((*c.x_tilde)[k] - lo[k], hi[k] - (*c.x_tilde)[k]);
            ihi[k] = 2 * (*c.x_tilde)[k] - ilo[k];
        }
        const auto s = make_exit_scenario(to_exit_model(c), c.domain, ConvexDomain::box(ilo, ihi), *c.x_tilde, 0.5, 2.0);
        EXPECT_GT(exit_cost(s, CostConvention::classical).value, 0.0) << c.model.id;
    }
}

TEST(Kramers, SyntheticExactLaw) {
    std::vector<KramersPoint> pts;
    for (double e : {1.0, 0.7, 0.5, 0.4}) pts.push_back({e, std::exp(2.25 / e), 0.0, 0.0});
    const auto f = kramers_fit(pts);
    EXPECT_NEAR(f.fit.slope, 2.25, 1e-13);
    EXPECT_NEAR(f.fit.intercept, 0.0, 1e-13);
}

TEST(Kramers, CensoredPointsAreExcluded) {
    std::vector<KramersPoint> pts{{1.0, 2.0, 0.1, 0.0}, {0.7, 5.0, 0.2, 0.0}, {0.5, 20.0, 1.0, 0.05}, {0.4, 90.0, 5.0, 0.2}};
    const auto f = kramers_fit(pts);
    EXPECT_EQ(f.used_eps, (std::vector<double>{1.0, 0.7, 0.5}));
    EXPECT_EQ(f.warnings.size(), 1u);
    pts[2].censored_fraction = 0.5;
    EXPECT_THROW(kramers_fit(pts), Error);
}
