#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pergola/scan.hpp"

namespace pergola {

enum class Label : std::uint8_t {
    none = 0,
    post,
    trunk,
    hedge,
    canopy,
    ground,
    weed,
    branch,
    pedestrian,
    boundary_object,
};

std::string to_string(Label l);
bool is_structure(Label l);  // post, trunk, hedge

struct Cylinder {
    double x = 0.0;
    double y = 0.0;
    double radius = 0.1;
    double z0 = 0.0;  // absolute heights
    double z1 = 1.0;
    Label label = Label::post;
    std::uint8_t intensity = 40;
};

struct Box {
    double x0 = 0.0, x1 = 1.0;
    double y0 = 0.0, y1 = 1.0;
    double z0 = 0.0, z1 = 1.0;
    Label label = Label::hedge;
    std::uint8_t intensity = 30;
};

// vertical retro-reflective strip facing along its normal
struct Strip {
    double cx = 0.0, cy = 0.0;
    double nx = 1.0, ny = 0.0;
    double width = 0.05;
    double z0 = 0.0, z1 = 1.0;
    std::uint8_t intensity = 200;
};

struct PedestrianSpec {
    double x = 0.0;
    double y = 0.0;
    double facing = 0.0;  // radians, world frame, direction the chest points
    double height = 1.75;
    bool vest = true;
    double strip_width = 0.05;
};

struct BoxSpec {
    double x0, x1, y0, y1, height;
};

struct WorldConfig {
    int row_count = 2;  // driving rows; treelines = row_count + 1
    double row_width = 4.0;
    double row_length = 40.0;
    double post_spacing = 5.5;
    double post_radius = 0.075;
    double trunk_radius_min = 0.06;
    double trunk_radius_max = 0.12;
    int trunks_per_bay = 1;
    double trunk_jitter = 0.4;  // along the treeline
    double lateral_jitter = 0.03;
    double trunk_kink = 0.0;  // max horizontal offset between lower and upper trunk sections
    double canopy_height = 2.0;
    double sag_amplitude = 0.3;
    double ground_slope_x = 0.0;
    double ground_slope_y = 0.0;
    bool hedges = true;
    double hedge_gap = 4.0;  // row end to hedge face
    double hedge_height = 2.5;
    double hedge_thickness = 1.0;
    int weeds = 0;
    double weed_max_height = 0.8;
    int branches = 0;
    double branch_min_length = 0.2;
    double branch_max_length = 0.35;
    std::vector<PedestrianSpec> pedestrians;
    std::vector<BoxSpec> boundary_objects;
    double range_noise_sigma = 0.0;
    double vest_dropout = 0.5;
    std::uint64_t seed = 1;

    void validate() const;
};

WorldConfig world_config_from_json(const std::string& text);
std::string world_config_to_json(const WorldConfig& cfg);

class OrchardWorld {
  public:
    explicit OrchardWorld(WorldConfig cfg);

    const WorldConfig& config() const noexcept { return cfg_; }
    const std::vector<Cylinder>& cylinders() const noexcept { return cylinders_; }
    const std::vector<Box>& boxes() const noexcept { return boxes_; }
    const std::vector<Strip>& strips() const noexcept { return strips_; }

    int treeline_count() const noexcept { return cfg_.row_count + 1; }
    double treeline_y(int i) const noexcept { return (i - 0.5) * cfg_.row_width; }
    double row_centre_y(int row) const noexcept { return row * cfg_.row_width; }
    // row whose centre is nearest to y
    int row_at(double y) const noexcept;
    double ground_z(double x, double y) const noexcept;
    bool inside_block(double x, double y) const noexcept;
    // canopy underside, only meaningful inside the block
    double canopy_z(double x, double y) const noexcept;

    // adds a hanging branch from the canopy at (x, y)
    void add_branch(double x, double y, double length, double radius);

    bool operator==(const OrchardWorld& o) const;

  private:
    WorldConfig cfg_;
    std::vector<Cylinder> cylinders_;
    std::vector<Box> boxes_;
    std::vector<Strip> strips_;
};

inline OrchardWorld build_world(const WorldConfig& cfg) { return OrchardWorld(cfg); }

struct RobotState {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
    double odometer = 0.0;
    double v = 0.0;
    double omega = 0.0;
};

RobotState step_robot(const RobotState& s, double v, double omega, double dt);

struct Offsets {
    double o_l;
    double o_a;
};

// true offsets of the lidar frame from a row centreline
Offsets true_row_offsets(const OrchardWorld& world, const RobotState& robot, int row);
inline Offsets true_row_offsets(const OrchardWorld& world, const RobotState& robot) {
    return true_row_offsets(world, robot, world.row_at(robot.y));
}

struct GroundTruthLabels {
    Matrix<Label> labels;  // per cell, Label::none where nothing was hit
    Offsets offsets{};
    int row = 0;
};

struct CastResult {
    LidarFrame frame;
    GroundTruthLabels truth;
};

// noise and vest dropout draw from `rng_seed`
CastResult cast_scan(const OrchardWorld& world, const RobotState& robot, const LidarSpec& spec,
                     std::uint64_t rng_seed = 0);

struct TruthMasks {
    BirdsEyeGrid all_structure;
    BirdsEyeGrid posts_trunks;
};
TruthMasks truth_masks(const LidarFrame& frame, const Matrix<Label>& labels, const GridSpec& grid);

struct VerticalScanSpec {
    double start_deg = -45.0;  // from +y (left), counter-clockwise towards +z
    double end_deg = 225.0;
    double step_deg = 0.25;
    double mount_height = 0.8;
    double max_range = 30.0;
};

struct ScanPoint2 {
    double y;  // lateral, left positive
    double z;  // height above the ground under the robot
    Label label;
};

std::vector<ScanPoint2> cast_vertical_scan(const OrchardWorld& world, const RobotState& robot,
                                           const VerticalScanSpec& spec = {});

struct Ray {
    Point3 origin;
    Point3 dir;  // unit
};

struct Hit {
    double t;
    Label label;
    std::uint8_t intensity;
    bool reflector;
};

std::optional<Hit> cast_ray(const OrchardWorld& world, const Ray& ray, double max_range);

// clutter-bearing worlds and poses with known offsets, shared by evaluations
struct SuiteFrame {
    OrchardWorld world;
    RobotState robot;
    CastResult cast;
};
std::vector<SuiteFrame> make_row_suite(int n_frames, std::uint64_t seed, const LidarSpec& spec);

}  // namespace pergola
