#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "rmv/geometry.hpp"
#include "rmv/vecmath.hpp"

using namespace rmv;

TEST(Contains, InteriorBoundaryExterior) {
    EXPECT_TRUE(ConvexDomain::box({0, 0}, {1, 1}).contains(Vector{0.5, 0.5}));
    EXPECT_FALSE(ConvexDomain::half_space({1, 0}, 1.0).contains(Vector{2, 0}));
    EXPECT_TRUE(ConvexDomain::ball({0, 0}, 1.0).contains(Vector{1, 0}, 0.0));
}

TEST(Project, HalfSpaceDropsOntoHyperplane) {
    const auto r = ConvexDomain::half_space({1, 0}, 1.0).project(Vector{2, 0});
    EXPECT_DOUBLE_EQ(r.projected_point[0], 1.0);
    EXPECT_DOUBLE_EQ(r.projected_point[1], 0.0);
    EXPECT_DOUBLE_EQ(r.k_increment[0], 1.0);
    EXPECT_DOUBLE_EQ(r.k_increment[1], 0.0);
}

TEST(Project, OrthantClampsComponentwise) {
    const auto r = ConvexDomain::box({0, 0}, {kInf, kInf}).project(Vector{-1, -2});
    EXPECT_EQ(r.projected_point, (Vector{0, 0}));
    EXPECT_EQ(r.k_increment, (Vector{-1, -2}));
}

TEST(Project, BallMatchesBoundaryGridMinimiser) {
    const auto r = ConvexDomain::ball({0, 0}, 1.0).project(Vector{3, 4});
    EXPECT_NEAR(r.projected_point[0], 0.6, 1e-15);
    EXPECT_NEAR(r.projected_point[1], 0.8, 1e-15);
    EXPECT_NEAR(r.k_magnitude_increment, 4.0, 1e-14);
    // Oracle: nearest point on a dense boundary grid.
    double best = kInf;
    Vector arg(2);
    for (int i = 0; i < 200000; ++i) {
        const double a = 2.0 * M_PI * i / 200000.0;
        const Vector y{std::cos(a), std::sin(a)};
        const double d = dist2(y, Vector{3, 4});
        if (d < best) best = d, arg = y;
    }
    EXPECT_NEAR(dist(arg, r.projected_point), 0.0, 1e-4);
}

TEST(OutwardNormal, FacesCornersAndBall) {
    const auto box = ConvexDomain::box({0, 0}, {1, 1});
    const auto n1 = box.outward_normal(Vector{1, 0.5});
    EXPECT_NEAR(n1[0], 1.0, 1e-15);
    EXPECT_NEAR(n1[1], 0.0, 1e-15);
    const auto nc = box.outward_normal(Vector{1, 1});
    EXPECT_NEAR(nc[0], 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(nc[1], 1.0 / std::sqrt(2.0), 1e-15);
    // Oracle: normal cone inequality on sampled points of the box.
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 10000; ++i) {
        const Vector y{u(gen), u(gen)};
        EXPECT_LE(nc[0] * (y[0] - 1) + nc[1] * (y[1] - 1), 0.0);
    }
    const auto nb = ConvexDomain::ball({0, 0}, 2.0).outward_normal(Vector{0, 2});
    EXPECT_NEAR(nb[0], 0.0, 1e-15);
    EXPECT_NEAR(nb[1], 1.0, 1e-15);
}

TEST(Project, PolyhedronSatisfiesVariationalInequality) {
    // Triangle x >= 0, y >= 0, x + y <= 1.
    const auto tri = ConvexDomain::polyhedron({{{-1, 0}, 0}, {{0, -1}, 0}, {{1, 1}, 1}});
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(-3.0, 3.0), v(0.0, 1.0);
    for (int i = 0; i < 500; ++i) {
        const Vector x{u(gen), u(gen)};
        const auto p = tri.project(x).projected_point;
        ASSERT_TRUE(tri.contains(p, 1e-12));
        for (int j = 0; j < 50; ++j) {
            double a = v(gen), b = v(gen);
            if (a + b > 1) a = 1 - a, b = 1 - b;
            EXPECT_LE((x[0] - p[0]) * (a - p[0]) + (x[1] - p[1]) * (b - p[1]), 1e-10);
        }
    }
}

// Planar oracle: the nearest feasible point among projections onto single
// faces and vertices of face pairs.
Vector planar_projection_oracle(const std::vector<HalfSpace>& faces, const Vector& x) {
    auto feasible = [&](const Vector& p) {
        for (const auto& f : faces)
            if (f.normal[0] * p[0] + f.normal[1] * p[1] - f.offset > 1e-9) return false;
        return true;
    };
    Vector best;
    double best_d = kInf;
    auto consider = [&](const Vector& p) {
        if (feasible(p) && dist(p, x) < best_d) best = p, best_d = dist(p, x);
    };
    consider(x);
    for (const auto& f : faces) {
        const double l = norm(f.normal), v = (f.normal[0] * x[0] + f.normal[1] * x[1] - f.offset) / (l * l);
        consider({x[0] - v * f.normal[0], x[1] - v * f.normal[1]});
    }
    for (std::size_t i = 0; i < faces.size(); ++i)
        for (std::size_t j = i + 1; j < faces.size(); ++j) {
            const auto &a = faces[i].normal, &b = faces[j].normal;
            const double det = a[0] * b[1] - a[1] * b[0];
            if (std::abs(det) < 1e-12) continue;
            consider({(faces[i].offset * b[1] - a[1] * faces[j].offset) / det,
                      (a[0] * faces[j].offset - faces[i].offset * b[0]) / det});
        }
    return best;
}

TEST(Project, PolyhedronMatchesVertexEnumerationOracle) {
    // Nearly parallel faces where cyclic projections creep; the result must
    // still be the exact projection.
    const std::vector<HalfSpace> faces = {{{0.97374903789111, 0.22762427639893251}, 0.63785171678671948},
                                          {{-0.88901281884068728, -0.45788230795362178}, 0.4494024622415661},
                                          {{-0.32803495596273013, 0.94466558509693255}, 0.37412472955635373},
                                          {{0.32615395618064952, 0.94531666486300281}, 0.57186729165704497},
                                          {{-0.52487648830877198, 0.85117840199376027}, 6.0602329096350234}};
    const auto poly = ConvexDomain::polyhedron(faces);
    const Vector x{6.3728417840460967, 4.4128825590693612};
    const auto p = poly.project(x).projected_point;
    const auto want = planar_projection_oracle(faces, x);
    EXPECT_NEAR(p[0], want[0], 1e-9);
    EXPECT_NEAR(p[1], want[1], 1e-9);

    std::mt19937_64 gen(11);
    std::normal_distribution<double> n(0.0, 1.0), far(0.0, 4.0);
    std::uniform_real_distribution<double> u(0.3, 1.3);
    for (int inst = 0; inst < 200; ++inst) {
        std::vector<HalfSpace> fs;
        for (int k = 0; k < 3 + inst % 4; ++k) fs.push_back({{n(gen), n(gen)}, u(gen)});
        for (auto& f : fs) {
            const double l = norm(f.normal);
            f.normal = {f.normal[0] / l, f.normal[1] / l};
            f.offset /= l;
        }
        const auto dom = ConvexDomain::polyhedron(fs);
        for (int i = 0; i < 50; ++i) {
            const Vector y{far(gen), far(gen)};
            const auto q = dom.project(y).projected_point, o = planar_projection_oracle(fs, y);
            ASSERT_NEAR(dist(q, o), 0.0, 1e-9) << "instance " << inst;
        }
    }
}

TEST(Project, HalfSpaceWithTinyCoordinatesLandsInside) {
    const auto h = ConvexDomain::half_space({1e-3, 1.0}, 1e-20);
    std::mt19937_64 gen(5);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
        const Vector x{1e4 * n(gen), 1e-18 * std::abs(n(gen))};
        const auto p = h.project(x).projected_point;
        ASSERT_TRUE(h.contains(p));
        EXPECT_EQ(h.project(p).projected_point, p);
    }
}

TEST(Project, IdempotentAndNonexpansive) {
    const std::vector<ConvexDomain> doms = {ConvexDomain::ball({0.5, -0.5, 1}, 2.0),
                                            ConvexDomain::box({-1, 0, -kInf}, {1, 2, 0}),
                                            ConvexDomain::half_space({1, 2, -1}, 0.5)};
    std::mt19937_64 gen(3);
    std::normal_distribution<double> n(0.0, 3.0);
    for (const auto& d : doms)
        for (int i = 0; i < 2000; ++i) {
            const Vector x{n(gen), n(gen), n(gen)}, y{n(gen), n(gen), n(gen)};
            const auto px = d.project(x).projected_point, py = d.project(y).projected_point;
            EXPECT_EQ(d.project(px).projected_point, px);
            EXPECT_LE(dist(px, py), dist(x, y) * (1 + 1e-14));
        }
}

TEST(Domain, JsonRoundTripAndUnknownKeys) {
    const auto j = nlohmann::json::parse(R"({"kind": "box", "params": {"lo": [0, "-inf"], "hi": [1, "inf"]}})");
    const auto d = ConvexDomain::from_json(j);
    EXPECT_TRUE(d.contains(Vector{0.5, -1e300}));
    EXPECT_EQ(ConvexDomain::from_json(d.to_json()).to_json(), d.to_json());
    EXPECT_THROW(ConvexDomain::from_json(nlohmann::json::parse(R"({"kind": "box", "lo": [0]})")), ConfigError);
    EXPECT_THROW(ConvexDomain::from_json(nlohmann::json::parse(R"({"kind": "torus", "params": {}})")), ConfigError);
}
