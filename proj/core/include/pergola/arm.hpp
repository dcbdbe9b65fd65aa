#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pergola/common.hpp"
#include "pergola/rownav.hpp"
#include "pergola/scan.hpp"

namespace pergola {

struct JointLimit {
    double lo = -kPi;
    double hi = kPi;
};

// planar chain of the middle three joints; angles measured cumulatively from +x
struct ArmGeometry {
    double r1 = 0.155;
    double r2 = 0.135;
    double r3 = 0.218;
    double x1 = 0.033;  // joint 1 position in the arm frame
    double y1 = 0.147;
    double beta = kPi / 2;  // last link pointing up
    std::array<JointLimit, 3> limits{};

    void validate() const;
};

struct JointAngles {
    double a1 = 0.0;
    double a2 = 0.0;
    double a3 = 0.0;
    bool operator==(const JointAngles&) const = default;
};

// up to two solutions, sorted by a1; empty means unreachable
std::vector<JointAngles> ik_planar3(Point2 target, double beta, const ArmGeometry& g);
inline std::vector<JointAngles> ik_planar3(Point2 target, const ArmGeometry& g) { return ik_planar3(target, g.beta, g); }

Point2 fk_planar3(const JointAngles& q, const ArmGeometry& g);
// base, elbow, wrist, end
std::array<Point2, 4> fk_chain(const JointAngles& q, const ArmGeometry& g);

// sum of wrapped per-joint differences
double joint_displacement(const JointAngles& a, const JointAngles& b);

struct WorkspaceGrid {
    double x_min = -0.09;
    double x_max = 0.26;
    double y_min = 0.4;
    double y_max = 0.75;
    double resolution = 0.001;

    void validate() const;
    int nx() const;
    int ny() const;
    double x(int i) const { return x_min + (i + 0.5) * resolution; }
    double y(int j) const { return y_min + (j + 0.5) * resolution; }
    // nearest cell, nullopt outside the window
    std::optional<std::pair<int, int>> cell_of(Point2 p) const;
};

struct WorkspaceMap {
    WorkspaceGrid grid;
    double beta = 0.0;
    Matrix<std::optional<JointAngles>> cells;  // rows are y (j), columns are x (i)

    bool reachable(int i, int j) const;
    const std::optional<JointAngles>& at(int i, int j) const;
    bool in_grid(int i, int j) const noexcept;
    // lowest reachable row in column i
    std::optional<int> low_row(int i) const;
};

WorkspaceMap build_workspace(const ArmGeometry& g, double beta, const WorkspaceGrid& grid);

// angles scaled into 1..255 per channel, 0 marks unreachable; rows top to bottom = y high to low
void write_workspace_ppm(std::ostream& out, const WorkspaceMap& map);
// i,j,x,y,reachable,a1,a2,a3
void write_workspace_csv(std::ostream& out, const WorkspaceMap& map);

enum class WaypointPhase { advance, ascend, extend };

struct Waypoint {
    int i = 0;
    int j = 0;
    WaypointPhase phase = WaypointPhase::advance;
    bool operator==(const Waypoint&) const = default;
};

struct WaypointPlan {
    bool ok = false;
    std::vector<Waypoint> waypoints;  // excludes the start cell
    std::optional<Waypoint> blocked;  // first waypoint on an unreachable cell
};

// low advance to target_x - raise_offset, ascend to target height, extend to the target
WaypointPlan plan_waypoints(std::pair<int, int> start, std::pair<int, int> target, const WorkspaceMap& map,
                            double raise_offset);
// forward path reversed, stopping at the first cell that is the lowest reachable one in its column
std::vector<Waypoint> retract_waypoints(const WaypointPlan& plan, std::pair<int, int> start, const WorkspaceMap& map);

struct RigidTransform {
    std::array<std::array<double, 3>, 3> R{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    Point3 T;

    Point3 apply(const Point3& p) const noexcept;
    double determinant() const noexcept;
};

// least squares B ~ R A + T
RigidTransform fit_rigid_transform(std::span<const Point3> a, std::span<const Point3> b);

// mean |K_i - (R C_i + T)|
double transform_error(std::span<const Point3> k, std::span<const Point3> c, const RigidTransform& t);

// angle of a hanging fruit from calyx and stem-insertion x offsets
double fruit_angle(double x_c, double x_i, double d_cs);

enum class CollisionClass { fruit, rigid, none };

CollisionClass parse_collision_class(std::string_view s);
int collision_risk(CollisionClass c) noexcept;
int collision_score(std::span<const CollisionClass> classes);

}  // namespace pergola
