#include "pergola/scan.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace pergola {

namespace {

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
T parse_number(std::string_view s, std::size_t line, const char* field) {
    s = trim(s);
    T v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ParseError(std::string("bad ") + field + " '" + std::string(s) + "'", line);
    return v;
}

}  // namespace

std::string format_exact(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string format_sig6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v == 0.0 ? 0.0 : v);  // no "-0"
    return buf;
}

double LidarSpec::plane_step_deg() const {
    if (plane_angles_deg.size() < 2) return 0.0;
    return (plane_angles_deg.front() - plane_angles_deg.back()) / (plane_angles_deg.size() - 1);
}

void LidarSpec::validate() const {
    if (plane_angles_deg.empty()) throw InvalidArgument("lidar: n_planes must be >= 1");
    for (std::size_t i = 1; i < plane_angles_deg.size(); ++i)
        if (!(plane_angles_deg[i] < plane_angles_deg[i - 1]))
            throw InvalidArgument("lidar: plane_angles must be strictly decreasing");
    for (double a : plane_angles_deg)
        if (!std::isfinite(a) || a <= -90.0 || a >= 90.0) throw InvalidArgument("lidar: plane angle out of range");
    if (n_azimuths < 1) throw InvalidArgument("lidar: n_azimuths must be >= 1");
    if (!(mount_height > 0.0)) throw InvalidArgument("lidar: mount_height must be > 0");
    if (!(max_range > 0.0)) throw InvalidArgument("lidar: max_range must be > 0");
}

LidarSpec LidarSpec::vlp16(int n_azimuths) {
    LidarSpec s;
    for (int i = 0; i < 16; ++i) s.plane_angles_deg.push_back(15.0 - 2.0 * i);
    s.n_azimuths = n_azimuths;
    return s;
}

LidarFrame::LidarFrame(LidarSpec s)
    : spec(std::move(s)),
      range(static_cast<std::size_t>(spec.n_planes()), static_cast<std::size_t>(spec.n_azimuths), 0.0),
      intensity(static_cast<std::size_t>(spec.n_planes()), static_cast<std::size_t>(spec.n_azimuths), 0) {
    spec.validate();
}

LidarFrame::LidarFrame(LidarSpec s, RangeImage r, ByteImage i)
    : spec(std::move(s)), range(std::move(r)), intensity(std::move(i)) {
    validate();
}

void LidarFrame::validate() const {
    spec.validate();
    const auto np = static_cast<std::size_t>(spec.n_planes());
    const auto na = static_cast<std::size_t>(spec.n_azimuths);
    if (range.rows() != np || range.cols() != na) throw InvalidArgument("frame: range matrix shape mismatch");
    if (intensity.rows() != np || intensity.cols() != na)
        throw InvalidArgument("frame: intensity matrix shape mismatch");
    for (double r : range.data())
        if (!std::isfinite(r) || r < 0.0 || r > spec.max_range) throw InvalidArgument("frame: range out of bounds");
}

std::optional<Point3> LidarFrame::point(int plane, int column) const {
    return polar_to_cartesian(spec.plane_angles_deg[static_cast<std::size_t>(plane)], spec.azimuth_deg(column),
                              range(static_cast<std::size_t>(plane), static_cast<std::size_t>(column)));
}

std::vector<Point3> LidarFrame::points() const {
    std::vector<Point3> out;
    for (int p = 0; p < planes(); ++p)
        for (int a = 0; a < azimuths(); ++a)
            if (auto q = point(p, a)) out.push_back(*q);
    return out;
}

std::vector<Point3> LidarFrame::plane_points(int plane) const {
    std::vector<Point3> out;
    for (int a = 0; a < azimuths(); ++a)
        if (auto q = point(plane, a)) out.push_back(*q);
    return out;
}

std::optional<Point3> polar_to_cartesian(double plane_angle_deg, double azimuth_deg, double range) {
    if (!std::isfinite(plane_angle_deg) || !std::isfinite(azimuth_deg) || !std::isfinite(range))
        throw InvalidArgument("polar_to_cartesian: non-finite input");
    if (range < 0.0) throw InvalidArgument("polar_to_cartesian: negative range");
    if (range == 0.0) return std::nullopt;
    const double a = deg2rad(plane_angle_deg);
    const double t = deg2rad(azimuth_deg);
    return Point3{range * std::cos(a) * std::cos(t), range * std::cos(a) * std::sin(t), range * std::sin(a)};
}

Polar cartesian_to_polar(const Point3& p) {
    const double h = std::hypot(p.x, p.y);
    const double r = std::hypot(h, p.z);
    double az = rad2deg(std::atan2(p.y, p.x));
    if (az < 0.0) az += 360.0;
    return {rad2deg(std::atan2(p.z, h)), az, r};
}

void GridSpec::validate() const {
    if (side_px < 1) throw InvalidArgument("grid: side_px must be >= 1");
    if (!(metres_per_px > 0.0)) throw InvalidArgument("grid: metres_per_px must be > 0");
}

BirdsEyeGrid::BirdsEyeGrid(GridSpec s)
    : spec(s), cells(static_cast<std::size_t>(s.side_px), static_cast<std::size_t>(s.side_px), 0.0) {
    spec.validate();
}

std::optional<PixelIndex> BirdsEyeGrid::pixel_of(double x, double y) const {
    const double fc = std::floor(x / spec.metres_per_px) + spec.origin();
    const double fr = std::floor(y / spec.metres_per_px) + spec.origin();
    if (!(fc >= 0.0 && fc < spec.side_px && fr >= 0.0 && fr < spec.side_px)) return std::nullopt;
    return PixelIndex{static_cast<int>(fr), static_cast<int>(fc)};
}

std::pair<double, double> BirdsEyeGrid::centre_of(int row, int col) const {
    return {(col - spec.origin() + 0.5) * spec.metres_per_px, (row - spec.origin() + 0.5) * spec.metres_per_px};
}

BirdsEyeGrid rasterize(std::span<const Point3> points, const GridSpec& grid, double increment) {
    BirdsEyeGrid out(grid);
    for (const auto& p : points)
        if (auto px = out.pixel_of(p.x, p.y))
            out.cells(static_cast<std::size_t>(px->row), static_cast<std::size_t>(px->col)) += increment;
    return out;
}

ByteImage scale_channel(const ByteImage& values, int bias, int p_max) {
    if (bias < 0 || bias > 255 || p_max < 1 || p_max > 255 || bias > p_max)
        throw InvalidArgument("scale_channel: need 0 <= bias <= p_max <= 255");
    int lo = 256, hi = -1;
    for (auto v : values.data())
        if (v != 0) {
            lo = std::min<int>(lo, v);
            hi = std::max<int>(hi, v);
        }
    if (hi < 0) return values;
    ByteImage out = values;
    for (auto& v : out.data()) {
        if (v == 0) continue;
        if (hi == lo) {
            v = static_cast<std::uint8_t>(p_max);
            continue;
        }
        const double s = bias + static_cast<double>(p_max - bias) * (v - lo) / static_cast<double>(hi - lo);
        v = static_cast<std::uint8_t>(std::clamp<long>(round_half_up(s), 0, p_max));
    }
    return out;
}

ByteImage enhance_contrast(const ByteImage& values, double k_o, int p_max) {
    if (!(k_o >= 0.0) || k_o >= p_max) throw InvalidArgument("enhance_contrast: need 0 <= k_o < p_max");
    ByteImage out = values;
    for (auto& v : out.data()) {
        const double s = p_max * (v - k_o) / (p_max - k_o);
        v = static_cast<std::uint8_t>(std::clamp<long>(round_half_up(s), 0, p_max));
    }
    return out;
}

std::string lidar_spec_to_json(const LidarSpec& spec) {
    nlohmann::json j;
    j["plane_angles_deg"] = spec.plane_angles_deg;
    j["n_azimuths"] = spec.n_azimuths;
    j["mount_height"] = spec.mount_height;
    j["max_range"] = spec.max_range;
    return j.dump();
}

LidarSpec lidar_spec_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    LidarSpec s = LidarSpec::vlp16();
    if (j.contains("plane_angles_deg")) s.plane_angles_deg = j.at("plane_angles_deg").get<std::vector<double>>();
    if (j.contains("n_azimuths")) s.n_azimuths = j.at("n_azimuths").get<int>();
    if (j.contains("mount_height")) s.mount_height = j.at("mount_height").get<double>();
    if (j.contains("max_range")) s.max_range = j.at("max_range").get<double>();
    for (const auto& [k, v] : j.items()) {
        if (k != "plane_angles_deg" && k != "n_azimuths" && k != "mount_height" && k != "max_range")
            throw InvalidArgument("lidar: unknown key " + k);
    }
    s.validate();
    return s;
}

void write_frame_csv(std::ostream& out, const LidarFrame& frame) {
    out << "# lidar " << lidar_spec_to_json(frame.spec) << '\n';
    out << "plane,azimuth,range_m,intensity\n";
    for (int p = 0; p < frame.planes(); ++p)
        for (int a = 0; a < frame.azimuths(); ++a) {
            const auto r = frame.range(static_cast<std::size_t>(p), static_cast<std::size_t>(a));
            const auto i = frame.intensity(static_cast<std::size_t>(p), static_cast<std::size_t>(a));
            if (r == 0.0 && i == 0) continue;
            out << p << ',' << a << ',' << format_exact(r) << ',' << static_cast<int>(i) << '\n';
        }
}

LidarFrame read_frame_csv(std::istream& in, const std::optional<LidarSpec>& fallback) {
    std::string line;
    std::size_t lineno = 0;
    LidarSpec spec = fallback ? *fallback : LidarSpec::vlp16();
    bool header = false;
    std::optional<LidarFrame> frame;
    Matrix<std::uint8_t> seen;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty()) continue;
        if (!header) {
            if (t.starts_with("# lidar ")) {
                try {
                    spec = lidar_spec_from_json(std::string(t.substr(8)));
                } catch (const std::exception& e) {
                    throw ParseError(std::string("bad lidar metadata: ") + e.what(), lineno);
                }
                continue;
            }
            if (t.starts_with('#')) continue;
            if (t != "plane,azimuth,range_m,intensity") throw ParseError("expected frame CSV header", lineno);
            header = true;
            frame.emplace(spec);
            seen = Matrix<std::uint8_t>(frame->range.rows(), frame->range.cols(), 0);
            continue;
        }
        const auto f = split(t, ',');
        if (f.size() != 4) throw ParseError("expected 4 fields", lineno);
        const int p = parse_number<int>(f[0], lineno, "plane");
        const int a = parse_number<int>(f[1], lineno, "azimuth");
        const double r = parse_number<double>(f[2], lineno, "range_m");
        const int i = parse_number<int>(f[3], lineno, "intensity");
        if (p < 0 || p >= frame->planes()) throw ParseError("plane index outside frame shape", lineno);
        if (a < 0 || a >= frame->azimuths()) throw ParseError("azimuth index outside frame shape", lineno);
        if (!std::isfinite(r) || r < 0.0 || r > frame->spec.max_range) throw ParseError("range out of bounds", lineno);
        if (i < 0 || i > 255) throw ParseError("intensity outside 0-255", lineno);
        auto& s = seen(static_cast<std::size_t>(p), static_cast<std::size_t>(a));
        if (s) throw ParseError("duplicate cell", lineno);
        s = 1;
        frame->range(static_cast<std::size_t>(p), static_cast<std::size_t>(a)) = r;
        frame->intensity(static_cast<std::size_t>(p), static_cast<std::size_t>(a)) = static_cast<std::uint8_t>(i);
    }
    if (!header) throw ParseError("missing frame CSV header", lineno + 1);
    return std::move(*frame);
}

void write_frame_csv(const std::string& path, const LidarFrame& frame) {
    auto out = open_out(path);
    write_frame_csv(out, frame);
}

LidarFrame read_frame_csv(const std::string& path, const std::optional<LidarSpec>& fallback) {
    auto in = open_in(path);
    return read_frame_csv(in, fallback);
}

void write_pcd(std::ostream& out, const LidarFrame& frame) {
    std::vector<std::pair<Point3, int>> pts;
    for (int p = 0; p < frame.planes(); ++p)
        for (int a = 0; a < frame.azimuths(); ++a)
            if (auto q = frame.point(p, a))
                pts.emplace_back(*q, frame.intensity(static_cast<std::size_t>(p), static_cast<std::size_t>(a)));
    out << "# .PCD v0.7 - Point Cloud Data file format\n"
        << "VERSION 0.7\n"
        << "FIELDS x y z intensity\n"
        << "SIZE 4 4 4 4\n"
        << "TYPE F F F F\n"
        << "COUNT 1 1 1 1\n"
        << "WIDTH " << pts.size() << '\n'
        << "HEIGHT 1\n"
        << "VIEWPOINT 0 0 0 1 0 0 0\n"
        << "POINTS " << pts.size() << '\n'
        << "DATA ascii\n";
    for (const auto& [q, i] : pts)
        out << format_exact(q.x) << ' ' << format_exact(q.y) << ' ' << format_exact(q.z) << ' ' << i << '\n';
}

void write_pcd(const std::string& path, const LidarFrame& frame) {
    auto out = open_out(path);
    write_pcd(out, frame);
}

void write_pgm(std::ostream& out, const Matrix<double>& cells) {
    out << "P2\n" << cells.cols() << ' ' << cells.rows() << "\n255\n";
    for (std::size_t r = 0; r < cells.rows(); ++r) {
        for (std::size_t c = 0; c < cells.cols(); ++c) {
            const double v = cells(r, c);
            const long q = std::isfinite(v) ? std::clamp<long>(round_half_up(v), 0, 255) : 0;
            if (c) out << ' ';
            out << q;
        }
        out << '\n';
    }
}

void write_pgm(const std::string& path, const Matrix<double>& cells) {
    auto out = open_out(path);
    write_pgm(out, cells);
}

Matrix<double> read_pgm(std::istream& in) {
    std::size_t lineno = 0;
    std::vector<std::pair<std::string, std::size_t>> tokens;
    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
        std::istringstream ls(line);
        std::string tok;
        while (ls >> tok) tokens.emplace_back(tok, lineno);
    }
    if (tokens.size() < 4 || tokens[0].first != "P2") throw ParseError("not a P2 PGM", 1);
    const auto width = parse_number<std::size_t>(tokens[1].first, tokens[1].second, "width");
    const auto height = parse_number<std::size_t>(tokens[2].first, tokens[2].second, "height");
    const auto maxval = parse_number<int>(tokens[3].first, tokens[3].second, "maxval");
    if (maxval < 1 || maxval > 65535) throw ParseError("bad maxval", tokens[3].second);
    if (tokens.size() - 4 != width * height)
        throw ParseError("expected " + std::to_string(width * height) + " samples, got " +
                             std::to_string(tokens.size() - 4),
                         tokens.back().second);
    Matrix<double> m(height, width, 0.0);
    for (std::size_t k = 0; k < width * height; ++k) {
        const auto& [tok, ln] = tokens[4 + k];
        const int v = parse_number<int>(tok, ln, "sample");
        if (v < 0 || v > maxval) throw ParseError("sample above maxval", ln);
        m.data()[k] = v;
    }
    return m;
}

Matrix<double> read_pgm(const std::string& path) {
    auto in = open_in(path);
    return read_pgm(in);
}

void write_grid_csv(std::ostream& out, const BirdsEyeGrid& grid) {
    out << "# grid side_px=" << grid.spec.side_px << " metres_per_px=" << format_exact(grid.spec.metres_per_px)
        << '\n'
        << "row,col,value\n";
    for (std::size_t r = 0; r < grid.cells.rows(); ++r)
        for (std::size_t c = 0; c < grid.cells.cols(); ++c)
            if (grid.cells(r, c) != 0.0) out << r << ',' << c << ',' << format_exact(grid.cells(r, c)) << '\n';
}

BirdsEyeGrid read_grid_csv(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("empty grid file", 1);
    ++lineno;
    GridSpec gs;
    {
        int side = 0;
        double mpp = 0.0;
        if (std::sscanf(line.c_str(), "# grid side_px=%d metres_per_px=%lf", &side, &mpp) != 2)
            throw ParseError("expected grid metadata line", lineno);
        gs.side_px = side;
        gs.metres_per_px = mpp;
    }
    if (!std::getline(in, line) || trim(line) != "row,col,value") throw ParseError("expected grid header", lineno + 1);
    ++lineno;
    BirdsEyeGrid grid(gs);
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty()) continue;
        const auto f = split(t, ',');
        if (f.size() != 3) throw ParseError("expected 3 fields", lineno);
        const auto r = parse_number<std::size_t>(f[0], lineno, "row");
        const auto c = parse_number<std::size_t>(f[1], lineno, "col");
        if (r >= grid.cells.rows() || c >= grid.cells.cols()) throw ParseError("cell outside grid", lineno);
        grid.cells(r, c) = parse_number<double>(f[2], lineno, "value");
    }
    return grid;
}

}  // namespace pergola
