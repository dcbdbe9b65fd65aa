#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "pergola/boom.hpp"
#include "pergola/sim.hpp"

using namespace pergola;

namespace {

std::vector<ScanPointYZ> roi_of(const std::vector<ScanPoint2>& scan, double half_width, double floor) {
    std::vector<ScanPointYZ> yz;
    for (const auto& p : scan) yz.push_back({p.y, p.z});
    return boom_roi(yz, half_width, floor);
}

}  // namespace

TEST_CASE("boom region of interest") {
    const std::vector<ScanPointYZ> scan{{0.0, 2.0}, {1.5, 2.0}, {-0.5, 0.5}, {1.0, 1.0}, {-1.0, 0.81}};
    const auto roi = boom_roi(scan, 1.0, 0.8);
    REQUIRE(roi.size() == 3);
    CHECK(roi[0].y == 0.0);
    CHECK(roi[1].y == 1.0);
    CHECK(roi[2].z == 0.81);
    const std::vector<ScanPointYZ> pass{{0.1, 2.0}, {-0.2, 1.9}};
    CHECK(boom_roi(pass, 1.0, 0.8).size() == 2);
    CHECK_THROWS_AS(boom_roi(pass, 0.0, 0.8), InvalidArgument);
}

TEST_CASE("scan target percentiles") {
    std::vector<ScanPointYZ> roi;
    for (double z : {2.3, 2.0, 2.4, 2.1, 2.2}) roi.push_back({0.0, z});
    CHECK(scan_target(roi, 10.0, 0.3).value() == doctest::Approx(1.7));
    CHECK(scan_target(roi, 50.0, 0.3).value() == doctest::Approx(1.9));
    CHECK(scan_target(roi, 100.0, 0.0).value() == doctest::Approx(2.4));
    CHECK_FALSE(scan_target(std::vector<ScanPointYZ>{}, 10.0, 0.3).has_value());
    CHECK_THROWS_AS(scan_target(roi, 0.0, 0.3), InvalidArgument);
}

TEST_CASE("collation and set-points") {
    BoomConfig cfg;
    cfg.sensor_to_boom = 1.0;
    cfg.min_height = 0.5;
    for (auto mode : {BoomMode::minimum, BoomMode::median}) {
        cfg.mode = mode;
        BoomController c(cfg);
        CHECK(c.set_point() == 0.5);
        CHECK(c.update(0.0, 1.8) == doctest::Approx(1.8));
    }

    cfg.mode = BoomMode::minimum;
    BoomController mn(cfg);
    cfg.mode = BoomMode::median;
    BoomController md(cfg);
    for (double h : {1.9, 1.7, 2.0}) {
        mn.update(0.1, h);
        md.update(0.1, h);
    }
    CHECK(mn.set_point() == doctest::Approx(1.7));
    CHECK(md.set_point() == doctest::Approx(1.9));

    // the 1.9 target was added first, then 1.7; move the boom past the 1.7 plane
    mn.update(0.85, std::nullopt);
    REQUIRE(mn.targets().size() == 2);
    mn.update(0.1, std::nullopt);
    REQUIRE(mn.targets().size() == 1);
    CHECK(mn.set_point() == doctest::Approx(2.0));
    mn.update(0.2, std::nullopt);
    CHECK(mn.targets().empty());
    CHECK(mn.set_point() == 0.5);

    CHECK_THROWS_AS(mn.update(-0.1, std::nullopt), InvalidArgument);
}

TEST_CASE("targets stay sorted and minimum never exceeds median") {
    std::mt19937_64 rng(51);
    std::uniform_real_distribution<double> adv(0.0, 0.3), h(1.2, 2.4);
    std::bernoulli_distribution miss(0.2);
    BoomConfig a;
    a.sensor_to_boom = 1.5;
    BoomConfig b = a;
    b.mode = BoomMode::median;
    BoomController mn(a), md(b);
    for (int i = 0; i < 2000; ++i) {
        const double d = adv(rng);
        const auto t = miss(rng) ? std::nullopt : std::optional<double>(h(rng));
        const double x = mn.update(d, t), y = md.update(d, t);
        CHECK(x <= y);
        const auto& ts = mn.targets();
        CHECK(std::is_sorted(ts.begin(), ts.end(),
                             [](const BoomTarget& p, const BoomTarget& q) { return p.position < q.position; }));
        for (const auto& tt : ts) CHECK(tt.position >= -1e-9);
    }
}

TEST_CASE("solid branch forces minimum mode") {
    BoomConfig cfg;
    cfg.mode = BoomMode::median;
    BoomController c(cfg);
    c.update(0.1, 2.0);
    c.update(0.1, 2.1);
    CHECK(c.update(0.1, 2.2, 1.3) == doctest::Approx(1.3));
    // the solid height stays collated; nearest-rank median of 1.3, 2.0, 2.1, 2.2
    CHECK(c.update(0.1, std::nullopt, std::nullopt) == doctest::Approx(2.0));
}

TEST_CASE("boom plane replay keeps the canopy above the boom") {
    WorldConfig wc;
    wc.row_count = 1;
    wc.row_length = 40.0;
    wc.ground_slope_x = 0.02;
    OrchardWorld w(wc);
    BoomConfig cfg;
    cfg.sensor_to_boom = 1.0;
    BoomController boom(cfg);
    const double step = 0.05;
    int below = 0, far_below = 0, checked = 0;
    RobotState r;
    r.y = 0.1;
    for (r.x = 2.0; r.x < 38.0; r.x += step) {
        const auto roi = roi_of(cast_vertical_scan(w, r), 1.0, 0.8);
        const double sp = boom.update(step, scan_target(roi, 10.0, 0.0));
        if (r.x < 2.0 + cfg.sensor_to_boom) continue;
        RobotState plane = r;
        plane.x -= cfg.sensor_to_boom;
        // targets and the boom plane both measure height above the local ground
        for (const auto& p : roi_of(cast_vertical_scan(w, plane), 1.0, 0.8)) {
            const double z = p.z;
            ++checked;
            below += z < sp;
            far_below += z < sp - 0.1;
        }
    }
    CHECK(checked > 1000);
    CHECK(far_below == 0);
    CHECK(below <= checked / 10);
}

TEST_CASE("disparity combination") {
    Matrix<double> a(2, 2, 50.0), b(2, 2, 52.0);
    CHECK(combine_disparities(a, a, 0.0) == a);
    const auto m = combine_disparities(a, b, 3.0);
    CHECK(m(0, 0) == doctest::Approx(51.0));
    const auto z = combine_disparities(a, b, 1.0);
    CHECK(z(1, 1) == 0.0);
    CHECK_THROWS_AS(combine_disparities(a, Matrix<double>(2, 3), 1.0), InvalidArgument);
    CHECK_THROWS_AS(combine_disparities(a, b, -1.0), InvalidArgument);

    std::mt19937_64 rng(52);
    std::uniform_real_distribution<double> u(0.0, 64.0);
    Matrix<double> p(20, 30), q(20, 30);
    for (auto& v : p.data()) v = u(rng);
    for (auto& v : q.data()) v = u(rng);
    CHECK(combine_disparities(p, q, 10.0) == combine_disparities(q, p, 10.0));
}
