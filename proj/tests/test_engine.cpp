#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace rmv;
using testing_helpers::model_1d;

TEST(Step, NoDynamicsLeavesCloudUnchanged) {
    const auto m = model_1d("0", "", 0.0);
    auto c = ParticleCloud::from_positions({0.1, 0.5, -3.0}, 1);
    StepOptions o;
    o.epsilon = 0.0;
    const auto st = step_reflected(c, m, ConvexDomain::whole_space(1), o);
    EXPECT_EQ(c.positions, (std::vector<double>{0.1, 0.5, -3.0}));
    EXPECT_EQ(st.pushes, 0u);
}

TEST(Step, ClampAtZeroAccumulatesLocalTime) {
    const auto m = model_1d("-1", "", 0.0);
    auto c = ParticleCloud::at_point(1, Vector{0.0});
    StepOptions o;
    o.dt = 0.1;
    o.epsilon = 0.0;
    const auto st = step_reflected(c, m, ConvexDomain::box({0.0}, {kInf}), o);
    EXPECT_EQ(c.positions[0], 0.0);
    EXPECT_DOUBLE_EQ(c.local_time_magnitude[0], 0.1);
    EXPECT_EQ(st.pushes, 1u);
    EXPECT_EQ(st.exterior_states, 0u);
}

TEST(Step, TwoParticleMeanInteraction) {
    const auto m = model_1d("0", "-x", 0.0);
    auto c = ParticleCloud::from_positions({0.0, 1.0}, 1);
    StepOptions o;
    o.dt = 0.5;
    o.epsilon = 0.0;
    o.method = InteractionMethod::pairwise;
    step_reflected(c, m, ConvexDomain::whole_space(1), o);
    // Particle 1: (1/2)[f(0) + f(-1)] = 0.5.
    EXPECT_DOUBLE_EQ(c.positions[0], 0.25);
    EXPECT_DOUBLE_EQ(c.positions[1], 0.75);
}

TEST(InteractionForce, DirectSums) {
    const auto cubic = [](std::span<const double> u, std::span<double> out) { out[0] = -u[0] * u[0] * u[0]; };
    const std::vector<double> same{2.0, 2.0, 2.0};
    EXPECT_EQ(interaction_force(same, 3, 1, cubic, 1)[0], 0.0);
    const double a = 0.7;
    const std::vector<double> pair{-a, a};
    EXPECT_DOUBLE_EQ(interaction_force(pair, 2, 1, cubic, 0)[0], 0.5 * (8 * a * a * a));
    const std::vector<double> three{0.0, 1.0, 2.0};
    EXPECT_DOUBLE_EQ(interaction_force(three, 3, 1, cubic, 0)[0], 3.0);
    EXPECT_THROW(interaction_force(three, 3, 1, cubic, 3), Error);
}

TEST(Interaction, MomentExpansionMatchesPairwise) {
    const auto c2 = make_quartic_2d();
    std::mt19937_64 gen(5);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> pos(2 * 300);
    for (double& v : pos) v = n(gen);
    PairwiseInteraction pw;
    std::vector<double> a(pos.size()), b(pos.size());
    pw.compute(c2.model.kernel, pos, 300, 2, a, 1);
    MomentExpansion me(c2.model.polynomial->kernel);
    me.fit(pos, 300);
    for (std::size_t i = 0; i < 300; ++i) {
        me.evaluate(std::span<const double>(pos).subspan(2 * i, 2), std::span<double>(b).subspan(2 * i, 2));
        const auto ref = interaction_force(pos, 300, 2, c2.model.kernel, i);
        for (int k = 0; k < 2; ++k) {
            EXPECT_NEAR(a[2 * i + k], ref[k], 1e-12 * (1 + std::abs(ref[k])));
            EXPECT_NEAR(b[2 * i + k], ref[k], 1e-10 * (1 + std::abs(ref[k])));
        }
    }
}

TEST(Simulate, StationaryPointStaysPut) {
    const auto c = make_ou_cubic_1d();
    SimConfig sc;
    sc.epsilon = 0.0;
    sc.n_particles = 1;
    sc.x0 = Vector{1.0};
    sc.t_end = 2.0;
    const auto r = simulate_paths(c.model, c.domain, sc);
    EXPECT_EQ(r.final_cloud.positions[0], 1.0);
}

TEST(Simulate, ReflectedBrownianMotionIsUniformOnInterval) {
    const auto c = make_pure_reflection();
    SimConfig sc;
    sc.epsilon = 1.0;
    sc.dt = 1e-3;
    sc.t_end = 3.0;
    sc.n_particles = 2000;
    sc.seed = 17;
    std::vector<double> t;
    for (int k = 1; k <= 20; ++k) t.push_back(1.0 + 0.1 * k);
    sc.snapshot_times = t;
    MemoryRecorder rec;
    const auto r = simulate_paths(c.model, c.domain, sc, &rec);
    EXPECT_EQ(r.stats.exterior_states, 0u);
    EXPECT_EQ(r.stats.interior_local_time_growth, 0u);
    // Oracle: uniform law on [0, 1] has mean 1/2, second moment 1/3 and a flat histogram.
    std::vector<double> all;
    for (const auto& s : rec.snapshots) all.insert(all.end(), s.positions.begin(), s.positions.end());
    EXPECT_NEAR(stable_mean(all), 0.5, 0.02);
    const auto m2 = sup_moment({rec.snapshots.back()}, 2.0, Vector{0.0});
    EXPECT_NEAR(m2.mean[0], 1.0 / 3.0, 0.02);
    std::vector<double> hist(10, 0.0);
    for (double x : all) hist[std::min<std::size_t>(9, static_cast<std::size_t>(x * 10))] += 1.0;
    // Projection piles up an O(sqrt(dt)) boundary layer in the two edge bins.
    for (std::size_t b = 1; b + 1 < hist.size(); ++b) EXPECT_NEAR(hist[b] / all.size(), 0.1, 0.01);
    EXPECT_NEAR(hist.front() / all.size(), 0.1, 0.03);
    EXPECT_NEAR(hist.back() / all.size(), 0.1, 0.03);
}

TEST(Simulate, DeterministicAcrossWorkerCounts) {
    const auto c = make_quartic_2d();
    SimConfig sc;
    sc.dt = 1e-3;
    sc.t_end = 0.2;
    sc.n_particles = 257;
    sc.seed = 99;
    sc.snapshot_times = {0.1, 0.2};
    std::string out[2];
    const int workers[2] = {1, 8};
    for (int w = 0; w < 2; ++w) {
        sc.workers = workers[w];
        std::ostringstream os;
        CsvSnapshotWriter rec(os);
        simulate_paths(c.model, c.domain, sc, &rec);
        out[w] = os.str();
    }
    EXPECT_EQ(out[0], out[1]);
    sc.method = InteractionMethod::pairwise;
    sc.workers = 1;
    std::ostringstream os;
    CsvSnapshotWriter rec(os);
    simulate_paths(c.model, c.domain, sc, &rec);
    EXPECT_NE(os.str(), out[0]); // different summation order, same law
}

TEST(Simulate, MomentsStayBelowClosedFormBound) {
    const auto c = make_ou_cubic_1d();
    SimConfig sc;
    sc.n_particles = 1024;
    sc.seed = 4;
    const auto r = simulate_paths(c.model, c.domain, sc);
    for (const auto& m : r.moments) EXPECT_LE(m.sup, m.bound);
}

TEST(Simulate, BlowUpIsReportedNotHidden) {
    const auto m = model_1d("x^9", "", 10.0, "", "", 0.0, 9.0);
    SimConfig sc;
    sc.dt = 1.0;
    sc.t_end = 10.0;
    sc.epsilon = 0.0;
    sc.taming = false;
    EXPECT_THROW(simulate_paths(m, ConvexDomain::whole_space(1), sc), NumericalError);
}

TEST(Simulate, RejectsStartOutsideDomain) {
    const auto c = make_ou_cubic_1d();
    SimConfig sc;
    sc.x0 = Vector{9.0};
    EXPECT_THROW(simulate_paths(c.model, c.domain, sc), ConfigError);
}

TEST(Recorder, BinaryRoundTrip) {
    const auto c = make_quartic_2d();
    SimConfig sc;
    sc.t_end = 0.05;
    sc.n_particles = 8;
    sc.snapshot_times = {0.0, 0.05};
    std::stringstream ss;
    BinarySnapshotWriter w(ss, {{"model", "quartic-2d"}});
    MemoryRecorder mem;
    simulate_paths(c.model, c.domain, sc, &w);
    simulate_paths(c.model, c.domain, sc, &mem);
    w.finish();
    const auto blk = read_binary_snapshots(ss);
    ASSERT_EQ(blk.snapshots.size(), 2u);
    EXPECT_EQ(blk.snapshots[1].positions, mem.snapshots[1].positions);
    EXPECT_EQ(blk.header["meta"]["model"], "quartic-2d");
}
