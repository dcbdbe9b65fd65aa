#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pergola/common.hpp"

namespace pergola {

struct Point3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    bool operator==(const Point3&) const = default;
};

struct LidarSpec {
    std::vector<double> plane_angles_deg;  // highest plane first
    int n_azimuths = 900;
    double mount_height = 0.8;
    double max_range = 100.0;

    int n_planes() const noexcept { return static_cast<int>(plane_angles_deg.size()); }
    double azimuth_step_deg() const noexcept { return 360.0 / n_azimuths; }
    double azimuth_deg(int column) const noexcept { return column * azimuth_step_deg(); }
    // mean gap between adjacent planes
    double plane_step_deg() const;
    void validate() const;

    // 16 planes, +15 to -15 degrees in 2 degree steps
    static LidarSpec vlp16(int n_azimuths = 900);

    bool operator==(const LidarSpec&) const = default;
};

using RangeImage = Matrix<double>;
using ByteImage = Matrix<std::uint8_t>;

// range 0 means no return; intensity kept even where range is 0
struct LidarFrame {
    LidarSpec spec;
    RangeImage range;
    ByteImage intensity;

    LidarFrame() = default;
    explicit LidarFrame(LidarSpec s);
    LidarFrame(LidarSpec s, RangeImage r, ByteImage i);

    int planes() const noexcept { return spec.n_planes(); }
    int azimuths() const noexcept { return spec.n_azimuths; }
    std::optional<Point3> point(int plane, int column) const;
    // all returned points, plane-major
    std::vector<Point3> points() const;
    // points of one plane, azimuth order
    std::vector<Point3> plane_points(int plane) const;
    void validate() const;
};

std::optional<Point3> polar_to_cartesian(double plane_angle_deg, double azimuth_deg, double range);

struct Polar {
    double elevation_deg;
    double azimuth_deg;  // [0, 360)
    double range;
};
Polar cartesian_to_polar(const Point3& p);

struct GridSpec {
    int side_px = 1000;
    double metres_per_px = 0.1;

    int origin() const noexcept { return side_px / 2; }
    double width_m() const noexcept { return side_px * metres_per_px; }
    void validate() const;
    bool operator==(const GridSpec&) const = default;
};

struct PixelIndex {
    int row;
    int col;
};

// col follows x, row follows y; lidar axis at (origin, origin)
struct BirdsEyeGrid {
    GridSpec spec;
    Matrix<double> cells;

    BirdsEyeGrid() = default;
    explicit BirdsEyeGrid(GridSpec s);

    std::optional<PixelIndex> pixel_of(double x, double y) const;
    // metric coordinates of a pixel centre
    std::pair<double, double> centre_of(int row, int col) const;
};

BirdsEyeGrid rasterize(std::span<const Point3> points, const GridSpec& grid, double increment = 1.0);

ByteImage scale_channel(const ByteImage& values, int bias, int p_max = 255);
ByteImage enhance_contrast(const ByteImage& values, double k_o, int p_max = 255);

// Frame CSV: optional "# lidar {...}" line, header, then one row per populated cell
void write_frame_csv(std::ostream& out, const LidarFrame& frame);
LidarFrame read_frame_csv(std::istream& in, const std::optional<LidarSpec>& fallback = std::nullopt);
void write_frame_csv(const std::string& path, const LidarFrame& frame);
LidarFrame read_frame_csv(const std::string& path, const std::optional<LidarSpec>& fallback = std::nullopt);

void write_pcd(std::ostream& out, const LidarFrame& frame);
void write_pcd(const std::string& path, const LidarFrame& frame);

// P2, maxval 255, values rounded and clamped
void write_pgm(std::ostream& out, const Matrix<double>& cells);
void write_pgm(const std::string& path, const Matrix<double>& cells);
Matrix<double> read_pgm(std::istream& in);
Matrix<double> read_pgm(const std::string& path);

// lossless sparse dump of non-zero cells
void write_grid_csv(std::ostream& out, const BirdsEyeGrid& grid);
BirdsEyeGrid read_grid_csv(std::istream& in);

std::string lidar_spec_to_json(const LidarSpec& spec);
LidarSpec lidar_spec_from_json(const std::string& text);

// shortest text that parses back to the same double
std::string format_exact(double v);
// 6 significant digits
std::string format_sig6(double v);

}  // namespace pergola
