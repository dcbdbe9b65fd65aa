#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "pergola/scan.hpp"

using namespace pergola;

TEST_CASE("polar_to_cartesian examples") {
    auto a = polar_to_cartesian(0.0, 0.0, 5.0).value();
    CHECK(a.x == doctest::Approx(5.0));
    CHECK(a.y == doctest::Approx(0.0));
    CHECK(a.z == doctest::Approx(0.0));

    auto b = polar_to_cartesian(90.0, 0.0, 2.0).value();
    CHECK(std::abs(b.x) < 1e-12);
    CHECK(std::abs(b.y) < 1e-12);
    CHECK(b.z == doctest::Approx(2.0));

    // 10 cos2 cos30, 10 cos2 sin30, 10 sin2
    auto c = polar_to_cartesian(2.0, 30.0, 10.0).value();
    CHECK(c.x == doctest::Approx(8.65498).epsilon(1e-5));
    CHECK(c.y == doctest::Approx(4.99695).epsilon(1e-5));
    CHECK(c.z == doctest::Approx(0.349).epsilon(1e-3));

    CHECK_FALSE(polar_to_cartesian(0.0, 0.0, 0.0).has_value());
    CHECK_THROWS_AS(polar_to_cartesian(std::nan(""), 0.0, 1.0), InvalidArgument);
    CHECK_THROWS_AS(polar_to_cartesian(0.0, 0.0, -1.0), InvalidArgument);
}

TEST_CASE("polar round trip") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> el(-89.0, 89.0), az(0.0, 359.999), r(0.05, 100.0);
    for (int i = 0; i < 2000; ++i) {
        const double e = el(rng), a = az(rng), d = r(rng);
        const auto back = cartesian_to_polar(polar_to_cartesian(e, a, d).value());
        CHECK(back.elevation_deg == doctest::Approx(e).epsilon(1e-9));
        CHECK(std::abs(back.azimuth_deg - a) < 1e-9);
        CHECK(std::abs(back.range - d) < 1e-9);
    }
}

TEST_CASE("lidar geometry defaults") {
    const auto s = LidarSpec::vlp16();
    CHECK(s.n_planes() == 16);
    CHECK(s.plane_angles_deg.front() == 15.0);
    CHECK(s.plane_angles_deg.back() == -15.0);
    for (std::size_t i = 1; i < s.plane_angles_deg.size(); ++i) CHECK(s.plane_angles_deg[i] < s.plane_angles_deg[i - 1]);
    CHECK(std::abs(s.n_azimuths * s.azimuth_step_deg() - 360.0) < 1e-9);
    CHECK(s.mount_height == 0.8);
    auto bad = s;
    bad.plane_angles_deg[3] = bad.plane_angles_deg[2];
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = s;
    bad.mount_height = 0.0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("rasterize") {
    const GridSpec g;
    CHECK(g.width_m() == doctest::Approx(100.0));
    CHECK(g.origin() == 500);

    std::vector<Point3> one{{0.0, 0.0, 0.0}};
    auto a = rasterize(one, g);
    double total = 0;
    for (double v : a.cells.data()) total += v;
    CHECK(total == 1.0);
    CHECK(a.cells(500, 500) == 1.0);

    std::vector<Point3> two{{0.31, 0.42, 0}, {0.35, 0.48, 1}};
    auto b = rasterize(two, g);
    CHECK(b.cells(504, 503) == 2.0);

    // 49.96 / 0.1 = 499.6 -> floor 499, plus origin 500
    std::vector<Point3> edge{{49.96, 0.0, 0.0}};
    auto c = rasterize(edge, g);
    CHECK(c.cells(500, 999) == 1.0);

    std::vector<Point3> outside{{50.0, 0.0, 0.0}, {-50.01, 0.0, 0.0}};
    auto d = rasterize(outside, g);
    CHECK(std::all_of(d.cells.data().begin(), d.cells.data().end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("rasterize is order independent") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-60.0, 60.0);
    std::vector<Point3> pts;
    for (int i = 0; i < 5000; ++i) pts.push_back({u(rng), u(rng), 0.0});
    const auto ref = rasterize(pts, {}, 0.5);
    for (int k = 0; k < 3; ++k) {
        std::shuffle(pts.begin(), pts.end(), rng);
        CHECK(rasterize(pts, {}, 0.5).cells == ref.cells);
    }
}

TEST_CASE("scale_channel") {
    ByteImage m(1, 4);
    m(0, 0) = 10;
    m(0, 1) = 60;
    m(0, 2) = 110;
    m(0, 3) = 0;
    const auto s = scale_channel(m, 8);
    CHECK(s(0, 0) == 8);
    CHECK(s(0, 1) == 132);  // 131.5 rounds up
    CHECK(s(0, 2) == 255);
    CHECK(s(0, 3) == 0);

    ByteImage zero(3, 3, 0);
    CHECK(scale_channel(zero, 8) == zero);
    ByteImage flat(2, 2, 7);
    CHECK(scale_channel(flat, 8) == ByteImage(2, 2, 255));
}

TEST_CASE("scale_channel keeps order of non-zero pixels") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> u(0, 255), b(0, 200);
    for (int trial = 0; trial < 50; ++trial) {
        ByteImage m(4, 16);
        for (auto& v : m.data()) v = static_cast<std::uint8_t>(u(rng));
        const int bias = b(rng);
        const auto s = scale_channel(m, bias);
        for (std::size_t i = 0; i < m.size(); ++i)
            for (std::size_t j = 0; j < m.size(); ++j) {
                if (m.data()[i] == 0 || m.data()[j] == 0) continue;
                if (m.data()[i] < m.data()[j]) CHECK(s.data()[i] <= s.data()[j]);
            }
        const auto [lo, hi] = std::minmax_element(m.data().begin(), m.data().end(), [](auto x, auto y) {
            return (x == 0 ? 256 : x) < (y == 0 ? 256 : y);
        });
        (void)hi;
        const auto idx = static_cast<std::size_t>(lo - m.data().begin());
        if (*lo != 0 && *std::max_element(m.data().begin(), m.data().end()) != *lo) CHECK(s.data()[idx] == bias);
    }
}

TEST_CASE("enhance_contrast") {
    ByteImage m(1, 3);
    m(0, 0) = 64;
    m(0, 1) = 255;
    m(0, 2) = 128;
    const auto e = enhance_contrast(m, 64.0);
    CHECK(e(0, 0) == 0);
    CHECK(e(0, 1) == 255);
    CHECK(e(0, 2) == 85);
    CHECK_THROWS_AS(enhance_contrast(m, 255.0), InvalidArgument);

    ByteImage ramp(1, 256);
    for (int i = 0; i < 256; ++i) ramp(0, static_cast<std::size_t>(i)) = static_cast<std::uint8_t>(i);
    for (double k : {0.0, 17.5, 100.0, 254.0}) {
        const auto r = enhance_contrast(ramp, k);
        for (std::size_t i = 1; i < 256; ++i) CHECK(r(0, i) >= r(0, i - 1));
    }
}

namespace {

LidarFrame random_frame(std::uint64_t seed) {
    LidarFrame f(LidarSpec::vlp16());
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> r(0.0, 60.0);
    std::uniform_int_distribution<int> in(0, 255), coin(0, 3);
    for (std::size_t i = 0; i < f.range.size(); ++i) {
        f.range.data()[i] = coin(rng) == 0 ? 0.0 : r(rng);
        f.intensity.data()[i] = f.range.data()[i] == 0.0 && coin(rng) != 0 ? 0 : static_cast<std::uint8_t>(in(rng));
    }
    return f;
}

}  // namespace

TEST_CASE("frame csv round trip is exact") {
    const auto f = random_frame(9);
    std::stringstream ss;
    write_frame_csv(ss, f);
    const auto g = read_frame_csv(ss);
    CHECK(g.spec == f.spec);
    CHECK(g.range == f.range);
    CHECK(g.intensity == f.intensity);
}

TEST_CASE("frame csv errors name the line") {
    std::stringstream ss("plane,azimuth,range_m,intensity\n0,0,1.5,20\n0,1,abc,20\n");
    try {
        read_frame_csv(ss);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    std::stringstream shape("plane,azimuth,range_m,intensity\n16,0,1.5,20\n");
    CHECK_THROWS_AS(read_frame_csv(shape), ParseError);
    std::stringstream dup("plane,azimuth,range_m,intensity\n1,0,1.5,20\n1,0,1.5,20\n");
    CHECK_THROWS_AS(read_frame_csv(dup), ParseError);
}

TEST_CASE("pcd has one line per return") {
    LidarFrame f(LidarSpec::vlp16());
    f.range(3, 10) = 4.0;
    f.intensity(3, 10) = 77;
    f.intensity(4, 4) = 200;  // dropout, no range
    std::stringstream ss;
    write_pcd(ss, f);
    std::string line, last;
    int data = -1;
    bool fields = false;
    while (std::getline(ss, line)) {
        if (line == "FIELDS x y z intensity") fields = true;
        if (data >= 0) ++data;
        if (line.rfind("DATA ascii", 0) == 0) data = 0;
        if (!line.empty()) last = line;
    }
    CHECK(fields);
    CHECK(data == 1);
}

TEST_CASE("pgm export") {
    BirdsEyeGrid g(GridSpec{20, 0.1});
    g.cells(3, 4) = 300.0;  // clamped
    g.cells(5, 5) = 1.0;
    std::stringstream ss;
    write_pgm(ss, g.cells);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    ss >> magic >> w >> h >> maxval;
    CHECK(magic == "P2");
    CHECK(w == 20);
    CHECK(h == 20);
    CHECK(maxval == 255);
    int n = 0, v = 0;
    while (ss >> v) ++n;
    CHECK(n == 400);
    std::stringstream again;
    write_pgm(again, g.cells);
    const auto back = read_pgm(again);
    CHECK(back(3, 4) == 255.0);
    CHECK(back(5, 5) == 1.0);
}

TEST_CASE("grid csv is lossless") {
    BirdsEyeGrid g(GridSpec{50, 0.2});
    g.cells(1, 2) = 0.123456789012345;
    g.cells(49, 0) = 1e-17;
    std::stringstream ss;
    write_grid_csv(ss, g);
    const auto back = read_grid_csv(ss);
    CHECK(back.spec == g.spec);
    CHECK(back.cells == g.cells);
}
