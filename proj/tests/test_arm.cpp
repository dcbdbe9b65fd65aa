#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "pergola/arm.hpp"

using namespace pergola;

namespace {

ArmGeometry unit_arm() {
    ArmGeometry g;
    g.r1 = g.r2 = g.r3 = 1.0;
    g.x1 = g.y1 = 0.0;
    return g;
}

double angle_gap(double a, double b) { return std::abs(wrap_angle(a - b)); }

bool same_angles(const JointAngles& a, const JointAngles& b, double tol) {
    return angle_gap(a.a1, b.a1) < tol && angle_gap(a.a2, b.a2) < tol && angle_gap(a.a3, b.a3) < tol;
}

const WorkspaceMap& default_map() {
    static const WorkspaceMap m = build_workspace(ArmGeometry{}, kPi / 2, WorkspaceGrid{});
    return m;
}

}  // namespace

TEST_CASE("forward kinematics") {
    const auto g = unit_arm();
    const auto z = fk_planar3({0, 0, 0}, g);
    CHECK(z.x == doctest::Approx(3.0));
    CHECK(std::abs(z.y) < 1e-15);
    const auto u = fk_planar3({kPi / 2, 0, 0}, g);
    CHECK(std::abs(u.x) < 1e-12);
    CHECK(u.y == doctest::Approx(3.0));

    ArmGeometry d;
    const auto e = fk_planar3({0, 0, 0}, d);
    CHECK(e.x == doctest::Approx(d.x1 + d.r1 + d.r2 + d.r3));
    CHECK(e.y == doctest::Approx(d.y1));
    const auto chain = fk_chain({0.3, -0.2, 0.5}, d);
    CHECK(chain[0].x == d.x1);
    CHECK(std::hypot(chain[1].x - chain[0].x, chain[1].y - chain[0].y) == doctest::Approx(d.r1));
    CHECK(std::hypot(chain[3].x - chain[2].x, chain[3].y - chain[2].y) == doctest::Approx(d.r3));
}

TEST_CASE("inverse kinematics examples") {
    const auto g = unit_arm();
    const auto full = ik_planar3({3.0, 0.0}, 0.0, g);
    REQUIRE(full.size() == 1);
    CHECK(same_angles(full[0], {0, 0, 0}, 1e-6));

    CHECK(ik_planar3({4.0, 0.0}, 0.0, g).empty());

    const auto two = ik_planar3({1.0, 2.0}, kPi / 2, g);
    REQUIRE(two.size() == 2);
    // brute-force FK over a 5-degree grid finds the same pair
    std::vector<JointAngles> grid_hits;
    const double step = kPi / 36;
    for (int i = -36; i < 36; ++i)
        for (int j = -36; j < 36; ++j) {
            const JointAngles q{i * step, j * step, wrap_angle(kPi / 2 - i * step - j * step)};
            const auto p = fk_planar3(q, g);
            if (std::hypot(p.x - 1.0, p.y - 2.0) < 1e-9) grid_hits.push_back(q);
        }
    REQUIRE(grid_hits.size() == 2);
    for (const auto& h : grid_hits)
        CHECK(std::any_of(two.begin(), two.end(), [&](const JointAngles& s) { return same_angles(s, h, 1e-9); }));
    CHECK(same_angles(two[0], {0, kPi / 2, 0}, 1e-9));
    CHECK(same_angles(two[1], {kPi / 2, -kPi / 2, kPi / 2}, 1e-9));

    // joint limits drop a solution
    auto lim = g;
    lim.limits[1] = {0.0, kPi};
    const auto one = ik_planar3({1.0, 2.0}, kPi / 2, lim);
    REQUIRE(one.size() == 1);
    CHECK(same_angles(one[0], {0, kPi / 2, 0}, 1e-9));

    auto bad = g;
    bad.r2 = 0.0;
    CHECK_THROWS_AS(ik_planar3({1.0, 1.0}, 0.0, bad), InvalidArgument);
}

TEST_CASE("inverse kinematics with a vertical chord") {
    const auto g = unit_arm();
    // wrist straight above the base: x3 == x1
    const auto s = ik_planar3({1.0, 1.5}, 0.0, g);
    REQUIRE(s.size() == 2);
    for (const auto& q : s) {
        const auto p = fk_planar3(q, g);
        CHECK(std::hypot(p.x - 1.0, p.y - 1.5) < 1e-12);
        CHECK(wrap_angle(q.a1 + q.a2 + q.a3) == doctest::Approx(0.0));
    }
}

TEST_CASE("forward of inverse is the identity") {
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> u(-kPi, kPi), b(-kPi, kPi);
    const ArmGeometry g;
    int both = 0;
    for (int t = 0; t < 1000; ++t) {
        const JointAngles q{u(rng), u(rng), u(rng)};
        const double beta = wrap_angle(q.a1 + q.a2 + q.a3);
        const auto p = fk_planar3(q, g);
        const auto sols = ik_planar3(p, beta, g);
        REQUIRE_FALSE(sols.empty());
        both += sols.size() == 2;
        bool found = false;
        for (const auto& s : sols) {
            const auto f = fk_planar3(s, g);
            CHECK(std::hypot(f.x - p.x, f.y - p.y) < 1e-9);
            CHECK(angle_gap(s.a1 + s.a2 + s.a3, beta) < 1e-9);
            found |= same_angles(s, q, 1e-6);
        }
        CHECK(found);
    }
    CHECK(both > 900);
}

TEST_CASE("workspace map") {
    SUBCASE("full reach and beyond") {
        const auto g = unit_arm();
        WorkspaceGrid grid{2.5, 3.5, -0.5, 0.5, 1.0};
        const auto m = build_workspace(g, 0.0, grid);
        REQUIRE(m.grid.nx() == 1);
        REQUIRE(m.grid.ny() == 1);
        REQUIRE(m.reachable(0, 0));
        CHECK(ik_planar3({3.0, 0.0}, 0.0, g).size() == 1);
        CHECK(same_angles(*m.at(0, 0), {0, 0, 0}, 1e-6));
        const auto out = build_workspace(g, 0.0, WorkspaceGrid{3.5, 4.5, -0.5, 0.5, 1.0});
        CHECK_FALSE(out.reachable(0, 0));
    }
    SUBCASE("default window") {
        const auto& m = default_map();
        const ArmGeometry g;
        CHECK(m.grid.nx() == 350);
        CHECK(m.grid.ny() == 350);
        int reachable = 0;
        double worst = 0.0;
        for (int j = 0; j < m.grid.ny(); ++j)
            for (int i = 0; i < m.grid.nx(); ++i) {
                const bool r = m.reachable(i, j);
                // consolidation keeps reachability
                CHECK(r == !ik_planar3({m.grid.x(i), m.grid.y(j)}, kPi / 2, g).empty());
                if (!r) continue;
                ++reachable;
                const auto p = fk_planar3(*m.at(i, j), g);
                CHECK(std::hypot(p.x - m.grid.x(i), p.y - m.grid.y(j)) < m.grid.resolution);
                for (auto [di, dj] : {std::pair{1, 0}, std::pair{0, 1}}) {
                    if (!m.in_grid(i + di, j + dj) || !m.reachable(i + di, j + dj)) continue;
                    const auto& a = *m.at(i, j);
                    const auto& b = *m.at(i + di, j + dj);
                    worst = std::max({worst, angle_gap(a.a1, b.a1), angle_gap(a.a2, b.a2), angle_gap(a.a3, b.a3)});
                }
            }
        CHECK(reachable > 350 * 350 / 2);
        CHECK(worst < 0.2);
    }
    CHECK_THROWS_AS(build_workspace(ArmGeometry{}, 0.0, WorkspaceGrid{0.1, 0.0, 0.4, 0.75, 0.01}), InvalidArgument);
}

TEST_CASE("workspace exports") {
    const auto g = unit_arm();
    const auto m = build_workspace(g, 0.0, WorkspaceGrid{2.0, 4.0, -0.5, 0.5, 0.5});
    std::ostringstream ppm, csv;
    write_workspace_ppm(ppm, m);
    write_workspace_csv(csv, m);
    const auto p = ppm.str();
    CHECK(p.rfind("P6\n4 2\n255\n", 0) == 0);
    CHECK(p.size() == std::string("P6\n4 2\n255\n").size() + 4 * 2 * 3);
    std::istringstream in(csv.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "i,j,x,y,reachable,a1,a2,a3");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 8);
}

TEST_CASE("waypoint planning") {
    const auto& m = default_map();
    SUBCASE("target straight above") {
        int i = 100;
        const int lo = m.low_row(i).value();
        int hi = lo;
        while (m.in_grid(i, hi + 1) && m.reachable(i, hi + 1)) ++hi;
        REQUIRE(hi > lo + 10);
        const auto plan = plan_waypoints({i, lo}, {i, hi}, m, 0.0);
        REQUIRE(plan.ok);
        CHECK(plan.waypoints.size() == static_cast<std::size_t>(hi - lo));
        for (const auto& w : plan.waypoints) CHECK(w.phase == WaypointPhase::ascend);
        CHECK(plan.waypoints.back() == Waypoint{i, hi, WaypointPhase::ascend});
    }
    SUBCASE("advance, ascend, extend") {
        int planned = 0;
        for (int i0 = 20; i0 < 340 && planned < 20; i0 += 37)
            for (int it = 40; it < 340 && planned < 20; it += 53) {
                const auto lo = m.low_row(i0);
                if (!lo) continue;
                for (int jt = *lo + 30; jt < m.grid.ny(); jt += 61) {
                    if (!m.reachable(it, jt)) continue;
                    const auto plan = plan_waypoints({i0, *lo}, {it, jt}, m, 0.05);
                    if (!plan.ok) {
                        REQUIRE(plan.blocked.has_value());
                        CHECK_FALSE(m.reachable(plan.blocked->i, plan.blocked->j));
                        continue;
                    }
                    ++planned;
                    const auto& w = plan.waypoints;
                    REQUIRE_FALSE(w.empty());
                    CHECK(w.back().i == it);
                    CHECK(w.back().j == jt);
                    for (std::size_t k = 1; k < w.size(); ++k) {
                        CHECK(static_cast<int>(w[k].phase) >= static_cast<int>(w[k - 1].phase));
                        CHECK(std::abs(w[k].i - w[k - 1].i) + std::abs(w[k].j - w[k - 1].j) == 1);
                        if (w[k].phase == WaypointPhase::advance) CHECK(w[k].j == *lo);
                        if (w[k].phase == WaypointPhase::ascend && w[k - 1].phase == WaypointPhase::ascend)
                            CHECK(w[k].i == w[k - 1].i);
                        if (w[k].phase == WaypointPhase::extend) CHECK(w[k].j == jt);
                    }
                    for (const auto& p : w) CHECK(m.reachable(p.i, p.j));
                    const auto back = retract_waypoints(plan, {i0, *lo}, m);
                    REQUIRE_FALSE(back.empty());
                    CHECK(m.low_row(back.back().i) == back.back().j);
                }
            }
        CHECK(planned >= 5);
    }
    SUBCASE("rejections") {
        const int lo = m.low_row(100).value();
        CHECK_THROWS_AS(plan_waypoints({100, lo}, {400, 10}, m, 0.0), InvalidArgument);
        CHECK_THROWS_AS(plan_waypoints({-1, lo}, {100, lo}, m, 0.0), InvalidArgument);
    }
}

TEST_CASE("rigid transform fit") {
    std::mt19937_64 rng(71);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Point3> a;
    for (int i = 0; i < 100; ++i) a.push_back({u(rng), u(rng), u(rng)});

    const auto id = fit_rigid_transform(a, a);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) CHECK(std::abs(id.R[r][c] - (r == c ? 1.0 : 0.0)) < 1e-12);
    CHECK(std::abs(id.T.x) + std::abs(id.T.y) + std::abs(id.T.z) < 1e-12);

    const double th = kPi / 6;
    std::vector<Point3> b;
    for (const auto& p : a)
        b.push_back({std::cos(th) * p.x - std::sin(th) * p.y + 1.0, std::sin(th) * p.x + std::cos(th) * p.y + 2.0, p.z + 3.0});
    const auto t = fit_rigid_transform(a, b);
    CHECK(transform_error(b, a, t) < 1e-9);
    CHECK(t.R[0][0] == doctest::Approx(std::cos(th)).epsilon(1e-12));
    CHECK(t.T.z == doctest::Approx(3.0).epsilon(1e-12));

    std::normal_distribution<double> n(0.0, 0.002);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Point3> noisy;
        for (const auto& p : b) noisy.push_back({p.x + n(rng), p.y + n(rng), p.z + n(rng)});
        const auto f = fit_rigid_transform(a, noisy);
        const double e = transform_error(noisy, a, f);
        CHECK(e >= 0.001);
        CHECK(e <= 0.004);
        CHECK(e <= transform_error(noisy, a, RigidTransform{}));
        CHECK(f.determinant() == doctest::Approx(1.0).epsilon(1e-9));
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                double dot = 0.0;
                for (int k = 0; k < 3; ++k) dot += f.R[k][r] * f.R[k][c];
                CHECK(std::abs(dot - (r == c ? 1.0 : 0.0)) < 1e-9);
            }
    }

    // a mirror image still yields a proper rotation
    std::vector<Point3> mirror;
    for (const auto& p : a) mirror.push_back({p.x, p.y, -p.z});
    CHECK(fit_rigid_transform(a, mirror).determinant() == doctest::Approx(1.0));

    const std::vector<Point3> line{{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {3, 3, 3}};
    CHECK_THROWS_AS(fit_rigid_transform(line, line), InvalidArgument);
    CHECK_THROWS_AS(fit_rigid_transform(std::vector<Point3>(a.begin(), a.begin() + 2), std::vector<Point3>(a.begin(), a.begin() + 2)),
                    InvalidArgument);
    CHECK_THROWS_AS(fit_rigid_transform(a, std::vector<Point3>(a.begin(), a.begin() + 50)), InvalidArgument);
}

TEST_CASE("transform error") {
    const std::vector<Point3> k{{3, 4, 0}}, c{{0, 0, 0}};
    CHECK(transform_error(k, c, RigidTransform{}) == doctest::Approx(5.0));
    CHECK(transform_error(c, c, RigidTransform{}) == 0.0);

    std::mt19937_64 rng(72);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    RigidTransform t;
    t.R = {{{0, -1, 0}, {1, 0, 0}, {0, 0, 1}}};
    t.T = {0.5, -0.25, 1.0};
    std::vector<Point3> kk, cc;
    double sum = 0.0;
    for (int i = 0; i < 50; ++i) {
        const Point3 p{u(rng), u(rng), u(rng)}, q{u(rng), u(rng), u(rng)};
        cc.push_back(p);
        kk.push_back(q);
        const double dx = q.x - (-p.y + 0.5), dy = q.y - (p.x - 0.25), dz = q.z - (p.z + 1.0);
        sum += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    CHECK(transform_error(kk, cc, t) == doctest::Approx(sum / 50.0).epsilon(1e-12));
    CHECK_THROWS_AS(transform_error(kk, c, t), InvalidArgument);
}

TEST_CASE("fruit angle") {
    CHECK(fruit_angle(0.1, 0.1, 0.05) == 0.0);
    CHECK(fruit_angle(0.125, 0.1, 0.05) == doctest::Approx(kPi / 6));
    CHECK(fruit_angle(0.15, 0.1, 0.05) == doctest::Approx(kPi / 2));
    CHECK(fruit_angle(0.05, 0.1, 0.05) == doctest::Approx(-kPi / 2));
    CHECK_THROWS_AS(fruit_angle(0.2, 0.1, 0.05), InvalidArgument);
    CHECK_THROWS_AS(fruit_angle(0.1, 0.1, 0.0), InvalidArgument);
}

TEST_CASE("collision score") {
    CHECK(collision_score(std::vector<CollisionClass>{}) == 0);
    const std::vector<CollisionClass> mix{CollisionClass::fruit, CollisionClass::rigid, CollisionClass::none};
    CHECK(collision_score(mix) == 13);
    CHECK(collision_score(std::vector<CollisionClass>(5, CollisionClass::rigid)) == 45);
    CHECK(parse_collision_class("wire") == CollisionClass::rigid);
    CHECK(parse_collision_class("fruit") == CollisionClass::fruit);
    CHECK_THROWS_AS(parse_collision_class("leaf"), InvalidArgument);
}
