#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "pergola/rownav.hpp"
#include "pergola/sim.hpp"

using namespace pergola;

namespace {

WorldConfig bare_config() {
    WorldConfig c;
    c.row_count = 2;
    c.trunks_per_bay = 0;
    c.hedges = false;
    return c;
}

Point3 to_world(const Point3& p, const RobotState& r, double sensor_z) {
    const double c = std::cos(r.heading), s = std::sin(r.heading);
    return {r.x + c * p.x - s * p.y, r.y + s * p.x + c * p.y, sensor_z + p.z};
}

}  // namespace

TEST_CASE("build_world examples") {
    WorldConfig c = bare_config();
    OrchardWorld w(c);
    CHECK(w.treeline_count() == 3);
    int lines = 0;
    for (int i = 0; i < w.treeline_count(); ++i) {
        const bool has = std::any_of(w.cylinders().begin(), w.cylinders().end(), [&](const Cylinder& cy) {
            return cy.label == Label::post && std::abs(cy.y - w.treeline_y(i)) < 1e-12;
        });
        lines += has;
    }
    CHECK(lines == 3);

    CHECK(OrchardWorld(c) == OrchardWorld(c));
    WorldConfig cl = c;
    cl.weeds = 20;
    cl.branches = 20;
    cl.trunks_per_bay = 2;
    CHECK(OrchardWorld(cl) == OrchardWorld(cl));
    WorldConfig other = cl;
    other.seed = 2;
    CHECK_FALSE(OrchardWorld(cl) == OrchardWorld(other));
}

TEST_CASE("post spacing along a treeline") {
    WorldConfig c = bare_config();
    c.row_width = 5.0;
    c.post_spacing = 5.5;
    OrchardWorld w(c);
    std::vector<Cylinder> posts;
    for (const auto& cy : w.cylinders())
        if (cy.label == Label::post) posts.push_back(cy);
    REQUIRE(posts.size() > 4);
    for (const auto& p : posts) {
        double best = 1e9;
        for (const auto& q : posts) {
            if (&p == &q || q.y != p.y) continue;
            best = std::min(best, std::hypot(p.x - q.x, p.y - q.y));
        }
        CHECK(std::abs(best - 5.5) < 1e-9);
    }
}

TEST_CASE("invalid geometry names the field") {
    WorldConfig c;
    c.row_width = 2.0;
    try {
        OrchardWorld w(c);
        FAIL("accepted");
    } catch (const InvalidArgument& e) {
        CHECK(std::string(e.what()).find("row_width") != std::string::npos);
    }
    WorldConfig p;
    p.pedestrians.push_back({1.0, 0.0, 0.0, 1.75, true, 0.0});
    CHECK_THROWS_AS(OrchardWorld{p}, InvalidArgument);
    WorldConfig h;
    h.canopy_height = -1.0;
    CHECK_THROWS_AS(OrchardWorld{h}, InvalidArgument);
}

TEST_CASE("world config json round trip") {
    WorldConfig c;
    c.row_count = 4;
    c.row_width = 3.75;
    c.weeds = 7;
    c.pedestrians.push_back({3.0, 1.0, 0.5, 1.8, true, 0.06});
    c.boundary_objects.push_back({1.0, 2.0, 3.0, 4.0, 1.5});
    c.seed = 99;
    const auto text = world_config_to_json(c);
    const auto back = world_config_from_json(text);
    CHECK(world_config_to_json(back) == text);
    CHECK(back.pedestrians.size() == 1);
    CHECK(back.seed == 99);
    CHECK_THROWS(world_config_from_json("{\"row_count\": 2, \"bogus\": 1}"));
    CHECK_THROWS(world_config_from_json("not json"));
}

TEST_CASE("empty flat world gives ground returns only in downward planes") {
    OrchardWorld w(bare_config());
    RobotState r;
    r.x = -300.0;  // block is beyond max range
    r.y = 0.0;
    const auto spec = LidarSpec::vlp16(360);
    const auto cast = cast_scan(w, r, spec);
    for (int p = 0; p < spec.n_planes(); ++p) {
        const double alpha = spec.plane_angles_deg[static_cast<std::size_t>(p)];
        for (int a = 0; a < spec.n_azimuths; ++a) {
            const double range = cast.frame.range(static_cast<std::size_t>(p), static_cast<std::size_t>(a));
            const auto label = cast.truth.labels(static_cast<std::size_t>(p), static_cast<std::size_t>(a));
            if (alpha > 0.0) {
                CHECK(range == 0.0);
                CHECK(label == Label::none);
            } else {
                CHECK(label == Label::ground);
                CHECK(range == doctest::Approx(spec.mount_height / std::sin(-alpha * kPi / 180.0)).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("single post hit count matches the angular width formula") {
    WorldConfig c = bare_config();
    c.row_count = 1;
    c.post_radius = 0.05;
    OrchardWorld w(c);
    RobotState r;
    r.x = -5.0;
    r.y = w.treeline_y(0);
    const auto spec = LidarSpec::vlp16(900);
    const auto cast = cast_scan(w, r, spec);
    const int plane = 7;  // +1 degree
    REQUIRE(spec.plane_angles_deg[plane] == 1.0);
    int hits = 0;
    for (int a = 0; a < spec.n_azimuths; ++a)
        if (cast.truth.labels(plane, static_cast<std::size_t>(a)) == Label::post &&
            cast.frame.range(plane, static_cast<std::size_t>(a)) < 5.5)
            ++hits;
    const double dh = spec.azimuth_step_deg();
    const double n_h = 1.0 + (2.0 / dh) * std::atan(0.05 / 5.0) * 180.0 / kPi;
    // columns whose ray passes inside the tangent cone
    int cone = 0;
    const double half = std::asin(0.05 / 5.0) * 180.0 / kPi;
    for (int k = -10; k <= 10; ++k) cone += std::abs(k * dh) < half;
    CHECK(hits == cone);
    CHECK(hits == static_cast<int>(std::floor(n_h)));
}

TEST_CASE("vest at 2 m returns high intensity") {
    WorldConfig c = bare_config();
    c.pedestrians.push_back({12.0, 0.0, kPi, 1.75, true, 0.05});
    OrchardWorld w(c);
    RobotState r;
    r.x = 10.0;
    const auto cast = cast_scan(w, r, LidarSpec::vlp16(900), 3);
    int bright = 0;
    for (std::size_t i = 0; i < cast.frame.intensity.size(); ++i) bright += cast.frame.intensity.data()[i] > 100;
    CHECK(bright >= 1);

    WorldConfig nv = c;
    nv.pedestrians[0].vest = false;
    const auto plain = cast_scan(OrchardWorld(nv), r, LidarSpec::vlp16(900), 3);
    bright = 0;
    for (std::size_t i = 0; i < plain.frame.intensity.size(); ++i) bright += plain.frame.intensity.data()[i] > 100;
    CHECK(bright == 0);
}

TEST_CASE("noise-free ranges match primitive geometry") {
    WorldConfig c;
    c.row_count = 2;
    c.ground_slope_x = 0.03;
    c.ground_slope_y = -0.02;
    c.weeds = 10;
    c.seed = 5;
    OrchardWorld w(c);
    RobotState r;
    r.x = 14.0;
    r.y = 0.2;
    r.heading = 0.1;
    const auto spec = LidarSpec::vlp16(450);
    const auto cast = cast_scan(w, r, spec);
    const double sz = w.ground_z(r.x, r.y) + spec.mount_height;
    int checked = 0;
    for (int p = 0; p < spec.n_planes(); ++p)
        for (int a = 0; a < spec.n_azimuths; ++a) {
            const auto q = cast.frame.point(p, a);
            if (!q) continue;
            const auto g = to_world(*q, r, sz);
            const auto l = cast.truth.labels(static_cast<std::size_t>(p), static_cast<std::size_t>(a));
            if (l == Label::ground) {
                CHECK(std::abs(g.z - w.ground_z(g.x, g.y)) < 1e-6);
                ++checked;
            } else if (l == Label::canopy) {
                CHECK(std::abs(g.z - w.canopy_z(g.x, g.y)) < 1e-6);
                ++checked;
            } else if (l == Label::post || l == Label::trunk || l == Label::weed) {
                double best = 1e9;
                for (const auto& cy : w.cylinders())
                    if (cy.label == l && g.z >= cy.z0 - 1e-6 && g.z <= cy.z1 + 1e-6)
                        best = std::min(best, std::abs(std::hypot(g.x - cy.x, g.y - cy.y) - cy.radius));
                CHECK(best < 1e-6);
                ++checked;
            }
        }
    CHECK(checked > 1000);
}

TEST_CASE("true offsets agree with the treeline construction") {
    WorldConfig c = bare_config();
    c.row_width = 4.5;
    OrchardWorld w(c);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 200; ++k) {
        RobotState r;
        r.x = 20.0 + 5.0 * u(rng);
        r.y = w.row_centre_y(1) + 0.8 * u(rng);
        r.heading = 0.4 * u(rng);
        const auto truth = true_row_offsets(w, r);
        auto local = [&](double x, double y) {
            const double dx = x - r.x, dy = y - r.y;
            const double ch = std::cos(r.heading), sh = std::sin(r.heading);
            return Point2{dx * ch + dy * sh, -dx * sh + dy * ch};
        };
        const double yl = w.treeline_y(2), yr = w.treeline_y(1);
        const auto g = ground_truth_offsets(local(0, yl), local(30, yl), local(0, yr), local(30, yr));
        CHECK(std::abs(g.o_l - truth.o_l) < 1e-9);
        CHECK(std::abs(g.o_a - truth.o_a) < 1e-9);
    }
}

TEST_CASE("cast_scan is deterministic in its seed") {
    WorldConfig c;
    c.range_noise_sigma = 0.03;
    c.weeds = 10;
    OrchardWorld w(c);
    RobotState r;
    r.x = 12.0;
    const auto spec = LidarSpec::vlp16(300);
    const auto a = cast_scan(w, r, spec, 17);
    const auto b = cast_scan(w, r, spec, 17);
    const auto d = cast_scan(w, r, spec, 18);
    CHECK(a.frame.range == b.frame.range);
    CHECK(a.frame.intensity == b.frame.intensity);
    CHECK(a.truth.labels == b.truth.labels);
    CHECK_FALSE(a.frame.range == d.frame.range);
}

TEST_CASE("vertical scan examples") {
    SUBCASE("canopy within sag band") {
        WorldConfig c = bare_config();
        OrchardWorld w(c);
        for (double x : {2.75, 5.5, 8.0, 13.0}) {
            RobotState r;
            r.x = x;
            int canopy = 0;
            for (const auto& p : cast_vertical_scan(w, r)) {
                if (p.label != Label::canopy) continue;
                ++canopy;
                CHECK(p.z <= 2.0 + 1e-6);
                CHECK(p.z >= 2.0 - c.sag_amplitude - 1e-6);
            }
            CHECK(canopy > 0);
        }
    }
    SUBCASE("hanging branch") {
        WorldConfig c = bare_config();
        c.sag_amplitude = 0.0;
        c.branch_max_length = 0.9;
        OrchardWorld w(c);
        w.add_branch(10.0, 0.3, 0.8, 0.05);
        RobotState r;
        r.x = 10.0;
        double lowest = 1e9;
        for (const auto& p : cast_vertical_scan(w, r))
            if (p.label == Label::branch) lowest = std::min(lowest, p.z);
        CHECK(lowest == doctest::Approx(1.2).epsilon(0.02));
    }
    SUBCASE("open headland") {
        OrchardWorld w(WorldConfig{});
        RobotState r;
        r.x = -2.0;
        for (const auto& p : cast_vertical_scan(w, r)) {
            CHECK(p.label != Label::canopy);
            CHECK(p.z <= 0.8 + 1e-9);
        }
    }
    CHECK_THROWS_AS(cast_vertical_scan(OrchardWorld(WorldConfig{}), RobotState{}, VerticalScanSpec{0, -1, 0.25, 0.8, 30}),
                    InvalidArgument);
}

TEST_CASE("step_robot examples") {
    RobotState s;
    s.heading = 0.3;
    auto a = step_robot(s, 1.0, 0.0, 1.0);
    CHECK(a.x == doctest::Approx(std::cos(0.3)));
    CHECK(a.y == doctest::Approx(std::sin(0.3)));
    CHECK(a.odometer == doctest::Approx(1.0));

    RobotState z;
    auto b = step_robot(z, 0.0, 1.0, kPi);
    CHECK(std::abs(b.x) < 1e-12);
    CHECK(std::abs(b.y) < 1e-12);
    CHECK(std::abs(std::abs(b.heading) - kPi) < 1e-12);
    CHECK(b.heading > -kPi);

    auto c = step_robot(z, 1.0, 1.0, kPi / 2);
    CHECK(std::hypot(c.x, c.y) == doctest::Approx(2.0 * std::sin(kPi / 4)).epsilon(1e-12));
    CHECK(c.x == doctest::Approx(1.0));
    CHECK(c.y == doctest::Approx(1.0));

    CHECK_THROWS_AS(step_robot(z, 1.0, 0.0, 0.0), InvalidArgument);
}

TEST_CASE("step_robot composes and keeps the odometer monotone") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    RobotState s;
    for (int k = 0; k < 500; ++k) {
        const double v = 2.0 * u(rng), w = u(rng), dt = 0.05 + 0.2 * (u(rng) + 1.0);
        const auto whole = step_robot(s, v, w, dt);
        const auto half = step_robot(step_robot(s, v, w, dt / 2), v, w, dt / 2);
        CHECK(std::abs(whole.x - half.x) < 1e-9);
        CHECK(std::abs(whole.y - half.y) < 1e-9);
        CHECK(whole.odometer >= s.odometer);
        CHECK(whole.heading > -kPi);
        CHECK(whole.heading <= kPi);
        s = whole;
    }
}
