#pragma once

#include <optional>
#include <span>
#include <vector>

#include "pergola/scan.hpp"

namespace pergola {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point2&) const = default;
};

struct RowDetectParams {
    double cluster_gap = 0.1;
    double max_contour = 0.5;
    double crowd_radius = 1.0;
    int crowd_count = 4;
    double container_xy_gap = 0.15;
    double min_height = 0.4;
    double max_height = 2.0;
    double row_width = 5.0;
    double angle_bin_deg = 1.0;

    void validate() const;
};

struct ControllerGains {
    double k_l = 0.5;  // rad/s per metre
    double k_a = 1.0;  // 1/s
    double k_f = 0.01;
    double k_e = 0.01;
    double w_a = 1.0;      // metres per radian
    double k_gamma = 1.0;  // free-space search gain

    void validate() const;
};

struct Cluster {
    std::vector<Point3> points;
    Point3 centroid;
    double contour_length = 0.0;
    int plane = 0;
};

// consecutive points closer than `gap` share a cluster; `wrap` joins the last cluster onto the first
std::vector<Cluster> cluster_plane(std::span<const Point3> points, double gap, int plane = 0, bool wrap = false);

struct Container {
    std::vector<Point3> points;
    Point3 centroid;
    double z_min = 0.0;
    double z_max = 0.0;
    double height() const noexcept { return z_max - z_min; }
};

struct RowDiagnostics {
    int clusters = 0;
    int clusters_after_contour = 0;
    int clusters_after_crowd = 0;
    int containers = 0;
    int containers_after_height = 0;
    int pairs = 0;
    int pairs_after_distance = 0;
    int mode_count = 0;
    std::vector<std::pair<Point2, Point2>> neighbour_pairs;  // after the distance filter
};

struct RowEstimate {
    bool valid = false;
    bool one_sided = false;
    double o_a = 0.0;
    double o_l = 0.0;
    std::vector<double> left;   // y' of left points
    std::vector<double> right;  // y' of right points
    RowDiagnostics diag;
};

RowEstimate detect_row(const LidarFrame& frame, const RowDetectParams& params = {});

// mean of the left and right lateral averages; needs both sides non-empty
double linear_offset(std::span<const double> left, std::span<const double> right);

double steering_command(double o_l, double o_a, const ControllerGains& gains);

// holds the last command for `hold_frames` frames without a row, then stops
class RowFollower {
  public:
    explicit RowFollower(ControllerGains gains = {}, int hold_frames = 5) : gains_(gains), hold_(hold_frames) {}

    // angular velocity command; nullopt once the hold has expired
    std::optional<double> update(const RowEstimate& est);
    int frames_without_row() const noexcept { return missing_; }

  private:
    ControllerGains gains_;
    int hold_;
    int missing_ = 0;
    std::optional<double> last_;
};

struct FreeSpaceResult {
    double gamma = 0.0;
    double omega = 0.0;
    std::vector<int> counts;  // per candidate angle
};

// rotates capped points by -gamma and counts |y| < half_width for each candidate
FreeSpaceResult free_space_angle(std::span<const Point2> points, double radius_cap, double half_width,
                                 std::span<const double> angles, double gain);

struct Centreline {
    Point2 far_point;   // image coordinates (x = column, y = row)
    Point2 near_point;
    int valid_rows = 0;
};

// widest segment per image row; throws InsufficientMask with fewer than 10 usable rows
class InsufficientMask : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};
Centreline centreline_from_mask(const Matrix<double>& mask);

double two_stage_steering(double x_f, double x_e, double x_c, double threshold, double k_f, double k_e,
                          bool foreground_only = false);

struct LineOffsets {
    double o_a;
    double o_l;
};

// each treeline as two points in the lidar frame
LineOffsets ground_truth_offsets(Point2 left_a, Point2 left_b, Point2 right_a, Point2 right_b);
// from two points on the centreline
LineOffsets centreline_offsets(Point2 c1, Point2 c2);

struct OffsetSample {
    double o_l;
    double o_a;
};
double tracking_cost(std::span<const OffsetSample> trajectory, double w_a);
double tracking_cost_abs(std::span<const OffsetSample> trajectory, double w_a);

}  // namespace pergola
