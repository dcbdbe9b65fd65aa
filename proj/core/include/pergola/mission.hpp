#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pergola/rownav.hpp"
#include "pergola/sim.hpp"
#include "pergola/volume.hpp"

namespace pergola {

inline constexpr double kStraightRadius = 1e9;

enum class VertexType { in_row, row_end };
enum class BoundaryCondition { fixed_length, no_canopy, hedge_offset, definite_row };
enum class AdditionalParameter { none, use_bumper };
enum class TurnDirection { left, right };

struct PathState {
    int state_id = 0;
    VertexType vertex = VertexType::in_row;
    double offset_in_location = 0.0;  // parsed and stored only
    double target_speed = 0.3;
    double goal_turn_radius = kStraightRadius;
    BoundaryCondition boundary = BoundaryCondition::fixed_length;
    double boundary_parameter = 1.0;
    AdditionalParameter additional = AdditionalParameter::none;
    double additional_value = 0.0;
    std::optional<TurnDirection> turn;

    bool operator==(const PathState&) const = default;
};

// throws InvalidArgument naming the offending state
void validate_path(std::span<const PathState> path);
std::vector<PathState> path_from_json(const std::string& text);
std::string path_to_json(std::span<const PathState> path);

// the field-tested row-end sequence, states 10 to 20
std::vector<PathState> reference_path();

bool detect_hedge_proximity(std::span<const Point3> points, const VolumeOfInterest& volume);

struct CanopyDebounce {
    int limit = 5;
    int counter = 0;
};

// row end once either side has been short of points for `limit` consecutive frames
bool detect_canopy_absence(std::span<const Point3> points, const VolumeOfInterest& left, const VolumeOfInterest& right,
                           CanopyDebounce& status);

struct MotionPrimitive {
    enum class Kind { straight, arc } kind = Kind::straight;
    double length = 0.0;  // path length along the primitive
    double radius = 0.0;  // arcs only
    double angle = 0.0;   // arcs only

    bool operator==(const MotionPrimitive&) const = default;
};

// straight then arc; arc_angle in (0, pi); checks 2 * radius < row_width when given
std::vector<MotionPrimitive> plan_naive_turn(double straight_length, double radius, double arc_angle,
                                             std::optional<double> row_width = std::nullopt);

struct Pose2 {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
};
Pose2 apply_primitives(Pose2 start, std::span<const MotionPrimitive> primitives, TurnDirection dir);

// |radius| reduced by delta when the volume is occupied, never below min_radius
double bumper_adjust(std::span<const Point3> points, const VolumeOfInterest& bumper, double radius, double delta,
                     double min_radius);

struct RobotGeometry {
    double length = 3.8;
    double width = 2.2;
    double lidar_forward = 1.9;  // lidar ahead of the rotation centre
};

// smallest distance between the robot outline and any post or trunk surface; negative on overlap
double footprint_clearance(const OrchardWorld& world, const RobotState& robot, const RobotGeometry& geometry);

RobotState lidar_pose(const RobotState& robot, const RobotGeometry& geometry);

struct MissionConfig {
    RobotGeometry geometry;
    LidarSpec lidar = LidarSpec::vlp16(900);
    RowDetectParams row;
    ControllerGains gains;
    double dt = 0.1;
    double max_omega = 0.6;
    // HEDGE_OFFSET replaces x_max with the state parameter
    VolumeOfInterest hedge{0.0, 2.3, -1.0, 1.0, -0.5, 1.5, 5};
    VolumeOfInterest canopy_left{-1.0, 3.0, 0.5, 4.0, -0.5, 1.5, 3};
    VolumeOfInterest canopy_right{-1.0, 3.0, -4.0, -0.5, -0.5, 1.5, 3};
    // for a left turn; mirrored for a right turn
    VolumeOfInterest bumper{-0.2, 1.2, -1.4, 0.3, -0.6, 1.5, 3};
    double min_turn_radius = 1.0;
    double definite_row_max_angle = 0.3;
    double row_angle_gate = 0.5;  // larger in-row |o_a| estimates are ignored
    double watchdog_factor = 3.0;
    double watchdog_distance = 60.0;  // states without a length parameter
    double max_time = 600.0;
    TurnDirection turn = TurnDirection::left;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrajectoryPoint {
    double t;
    double x;
    double y;
    double heading;
    int state_id;
    double v;
    double omega;
};

struct StateEntry {
    int state_id;
    double t;
    double odometer;
};

struct MissionResult {
    bool completed = false;
    std::optional<int> aborted_state;
    std::string abort_reason;
    std::vector<TrajectoryPoint> trajectory;
    std::vector<StateEntry> entries;
    std::vector<RobotState> poses;  // one per trajectory point
};

MissionResult run_path(std::span<const PathState> path, const OrchardWorld& world, RobotState start,
                       const MissionConfig& config = {});

// open-loop (duration, v, omega) segment, or an autonomous row-following one
struct ScriptSegment {
    double duration = 0.0;
    double v = 0.0;
    double omega = 0.0;
    bool autonomous = false;  // omega comes from the row follower
    bool operator==(const ScriptSegment&) const = default;
};

// JSON array; each entry [duration, v, omega] or {"duration", "v", "omega"} or {"duration", "v", "autonomous": true}
std::vector<ScriptSegment> scenario_from_json(const std::string& text);

// state_id in the trajectory is the segment index
MissionResult run_script(std::span<const ScriptSegment> script, const OrchardWorld& world, RobotState start,
                         const MissionConfig& config = {});

void write_trajectory_csv(std::ostream& os, std::span<const TrajectoryPoint> trajectory);

std::string to_string(VertexType v);
std::string to_string(BoundaryCondition b);
std::string to_string(AdditionalParameter a);
std::string to_string(TurnDirection d);

}  // namespace pergola
