#include <cmath>

#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace rmv;
using testing_helpers::model_1d;

TEST(Probes, AttractiveCubicKernelPasses) {
    const auto m = model_1d("0", "-x^3", 0.0, "0", "x^4/4", 0.0, 3.0);
    const auto dom = ConvexDomain::whole_space(1);
    const auto rep = probe_exit_assumptions({m, {0.0}, 1.0}, dom, 10000, 1);
    ASSERT_NE(rep.find("kernel_odd"), nullptr);
    EXPECT_FALSE(rep.find("kernel_odd")->violated);
    EXPECT_EQ(rep.find("kernel_odd")->worst_margin, 0.0);
    EXPECT_FALSE(rep.find("kernel_monotone")->violated);
}

TEST(Probes, RepulsiveCubicKernelViolatesMonotonicity) {
    const auto m = model_1d("-x", "x^3", 0.0, "-x^2/2", "-x^4/4", 1.0, 3.0);
    const auto rep = probe_exit_assumptions({m, {0.0}, 1.0}, ConvexDomain::whole_space(1), 10000, 1);
    EXPECT_TRUE(rep.find("kernel_monotone")->violated);
    // x = 1, y = 0: <x - y, f(x) - f(y)> = 1 > 0.
    Vector f1(1), f0(1);
    m.kernel(Vector{1.0}, f1);
    m.kernel(Vector{0.0}, f0);
    EXPECT_DOUBLE_EQ((1.0 - 0.0) * (f1[0] - f0[0]), 1.0);
}

TEST(Probes, LinearDriftSaturatesContraction) {
    const auto m = model_1d("-2*(x-1)", "", 2.0, "-(x-1)^2", "0", 2.0);
    const auto rep = probe_exit_assumptions({m, {1.0}, 2.0}, ConvexDomain::interval(-2, 4), 10000, 3);
    const auto* c = rep.find("drift_contraction");
    ASSERT_NE(c, nullptr);
    EXPECT_FALSE(c->violated);
    EXPECT_NEAR(c->worst_margin, 0.0, 1e-9);
}

TEST(Catalog, AllBuiltinsPassProbes) {
    for (const auto& c : builtin_models()) {
        EXPECT_TRUE(probe_assumptions(c.model, c.domain, 4096, 11).pass()) << c.model.id;
        if (c.x_tilde) {
            EXPECT_TRUE(probe_exit_assumptions(to_exit_model(c), c.domain, 4096, 11).pass()) << c.model.id;
        }
    }
    EXPECT_THROW(find_model("no-such-model"), ConfigError);
}

TEST(Catalog, GrowthOrderMatchesKernel) {
    for (const auto& c : builtin_models()) {
        if (c.model.zero_kernel) continue;
        const Vector dir(c.model.dim, 1.0);
        EXPECT_NEAR(observed_growth_order(c.model.kernel, dir), c.model.growth_order, 0.05) << c.model.id;
    }
}

TEST(Catalog, PotentialsMatchFields) {
    const auto c = make_ou_cubic_1d();
    std::vector<Vector> pts;
    for (double x = -2; x <= 4; x += 0.25) pts.push_back({x});
    const auto drift = [&](std::span<const double> x, std::span<double> out) { c.model.drift(0.0, x, out); };
    EXPECT_LT(gradient_consistency(c.model.drift_potential, 1.0, drift, pts), 1e-8);
    EXPECT_LT(gradient_consistency(c.model.kernel_potential, -1.0, c.model.kernel, pts), 1e-8);
}

TEST(ModelJson, InlineSpecAndUnknownKeys) {
    const auto j = nlohmann::json::parse(
        R"({"dim": 2, "drift": ["-x1", "-x2"], "kernel": ["-x1", "-x2"], "L": 1, "r": 2, "x0": [0, 0]})");
    const auto m = make_polynomial_model(model_spec_from_json(j));
    Vector out(2);
    m.drift(0.0, Vector{1.0, -2.0}, out);
    EXPECT_EQ(out, (Vector{-1.0, 2.0}));
    auto bad = j;
    bad["lipshitz"] = 1;
    EXPECT_THROW(model_spec_from_json(bad), ConfigError);
    EXPECT_THROW(parse_polynomial("x^", 1), ConfigError);
}
