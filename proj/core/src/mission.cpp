#include "pergola/mission.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

namespace pergola {

namespace {

const char* kFields[] = {"State ID",
                         "Vertex Type",
                         "Offset in Location (m)",
                         "Target Speed (ms-1)",
                         "Goal Turn Radius (m)",
                         "Boundary Condition Criteria",
                         "Boundary Condition Parameter",
                         "Additional Parameter",
                         "Additional Parameter Value",
                         "Turn Direction"};

VertexType vertex_from(const std::string& s) {
    if (s == "IN_ROW") return VertexType::in_row;
    if (s == "ROW_END") return VertexType::row_end;
    throw InvalidArgument("path: unknown vertex type " + s);
}

BoundaryCondition boundary_from(const std::string& s) {
    if (s == "FIXED_LENGTH") return BoundaryCondition::fixed_length;
    if (s == "NO_CANOPY") return BoundaryCondition::no_canopy;
    if (s == "HEDGE_OFFSET") return BoundaryCondition::hedge_offset;
    if (s == "DEFINITE_ROW") return BoundaryCondition::definite_row;
    throw InvalidArgument("path: unknown boundary condition " + s);
}

AdditionalParameter additional_from(const std::string& s) {
    if (s == "NONE") return AdditionalParameter::none;
    if (s == "USE_BUMPER") return AdditionalParameter::use_bumper;
    throw InvalidArgument("path: unknown additional parameter " + s);
}

TurnDirection turn_from(const std::string& s) {
    if (s == "LEFT") return TurnDirection::left;
    if (s == "RIGHT") return TurnDirection::right;
    throw InvalidArgument("path: unknown turn direction " + s);
}

bool is_count(double v) { return v >= 1.0 && v == std::floor(v); }

}  // namespace

std::string to_string(VertexType v) { return v == VertexType::in_row ? "IN_ROW" : "ROW_END"; }

std::string to_string(BoundaryCondition b) {
    switch (b) {
        case BoundaryCondition::fixed_length: return "FIXED_LENGTH";
        case BoundaryCondition::no_canopy: return "NO_CANOPY";
        case BoundaryCondition::hedge_offset: return "HEDGE_OFFSET";
        case BoundaryCondition::definite_row: return "DEFINITE_ROW";
    }
    return "FIXED_LENGTH";
}

std::string to_string(AdditionalParameter a) { return a == AdditionalParameter::none ? "NONE" : "USE_BUMPER"; }
std::string to_string(TurnDirection d) { return d == TurnDirection::left ? "LEFT" : "RIGHT"; }

void validate_path(std::span<const PathState> path) {
    if (path.empty()) throw InvalidArgument("path: no states");
    for (std::size_t i = 0; i < path.size(); ++i) {
        const auto& s = path[i];
        auto fail = [&](const std::string& why) {
            throw InvalidArgument("path: state " + std::to_string(s.state_id) + ": " + why);
        };
        if (i > 0 && s.state_id <= path[i - 1].state_id) fail("state ids must increase");
        if (!(s.target_speed >= 0.0)) fail("target speed must be >= 0");
        if (!(s.goal_turn_radius > 0.0)) fail("turn radius must be > 0");
        switch (s.boundary) {
            case BoundaryCondition::fixed_length:
            case BoundaryCondition::hedge_offset:
                if (!(s.boundary_parameter > 0.0)) fail("boundary parameter must be > 0");
                break;
            case BoundaryCondition::no_canopy:
            case BoundaryCondition::definite_row:
                if (!is_count(s.boundary_parameter)) fail("boundary parameter must be a whole frame count");
                break;
        }
        if (s.additional == AdditionalParameter::use_bumper && !(s.additional_value > 0.0))
            fail("bumper value must be > 0");
    }
    // manoeuvres sit between row traversals
    if (path.front().vertex != VertexType::in_row || path.back().vertex != VertexType::in_row)
        throw InvalidArgument("path: must start and end with IN_ROW states");
}

std::vector<PathState> path_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    if (!j.is_array()) throw InvalidArgument("path: expected a JSON array");
    std::vector<PathState> out;
    for (const auto& e : j) {
        if (!e.is_object()) throw InvalidArgument("path: each state must be an object");
        for (const auto& [k, v] : e.items()) {
            if (std::find(std::begin(kFields), std::end(kFields), k) == std::end(kFields))
                throw InvalidArgument("path: unknown key " + k);
        }
        PathState s;
        s.state_id = e.at(kFields[0]).get<int>();
        s.vertex = vertex_from(e.at(kFields[1]).get<std::string>());
        s.offset_in_location = e.value(kFields[2], 0.0);
        s.target_speed = e.at(kFields[3]).get<double>();
        s.goal_turn_radius = e.value(kFields[4], kStraightRadius);
        s.boundary = boundary_from(e.at(kFields[5]).get<std::string>());
        s.boundary_parameter = e.at(kFields[6]).get<double>();
        s.additional = additional_from(e.value(kFields[7], std::string("NONE")));
        s.additional_value = e.value(kFields[8], 0.0);
        if (e.contains(kFields[9])) s.turn = turn_from(e.at(kFields[9]).get<std::string>());
        out.push_back(s);
    }
    validate_path(out);
    return out;
}

std::string path_to_json(std::span<const PathState> path) {
    auto j = nlohmann::json::array();
    for (const auto& s : path) {
        nlohmann::json e = {{kFields[0], s.state_id},
                            {kFields[1], to_string(s.vertex)},
                            {kFields[2], s.offset_in_location},
                            {kFields[3], s.target_speed},
                            {kFields[4], s.goal_turn_radius},
                            {kFields[5], to_string(s.boundary)},
                            {kFields[6], s.boundary_parameter},
                            {kFields[7], to_string(s.additional)},
                            {kFields[8], s.additional_value}};
        if (s.turn) e[kFields[9]] = to_string(*s.turn);
        j.push_back(e);
    }
    return j.dump(2);
}

std::vector<PathState> reference_path() {
    using B = BoundaryCondition;
    using V = VertexType;
    return {
        {10, V::in_row, 0.0, 0.3, kStraightRadius, B::fixed_length, 5.0, AdditionalParameter::none, 0.0, {}},
        {11, V::in_row, 0.0, 1.0, kStraightRadius, B::no_canopy, 5.0, AdditionalParameter::none, 0.0, {}},
        {12, V::row_end, 0.0, 0.3, kStraightRadius, B::hedge_offset, 2.3, AdditionalParameter::none, 0.0, {}},
        {13, V::row_end, 0.0, 0.3, 2.0, B::fixed_length, 2.5, AdditionalParameter::none, 0.0, {}},
        {14, V::row_end, 0.0, 0.3, 1.7, B::fixed_length, 2.7, AdditionalParameter::use_bumper, 0.05, {}},
        {15, V::row_end, 0.0, 0.3, 1.7, B::definite_row, 5.0, AdditionalParameter::none, 0.0, {}},
        {20, V::in_row, 0.0, 0.3, kStraightRadius, B::fixed_length, 5.0, AdditionalParameter::none, 0.0, {}},
    };
}

bool detect_hedge_proximity(std::span<const Point3> points, const VolumeOfInterest& volume) {
    return object_in_volume(points, volume);
}

bool detect_canopy_absence(std::span<const Point3> points, const VolumeOfInterest& left, const VolumeOfInterest& right,
                           CanopyDebounce& status) {
    if (status.limit < 1) throw InvalidArgument("canopy debounce limit must be >= 1");
    const bool absent = !object_in_volume(points, left) || !object_in_volume(points, right);
    status.counter = absent ? std::min(status.counter + 1, status.limit) : 0;
    return status.counter >= status.limit;
}

std::vector<MotionPrimitive> plan_naive_turn(double straight_length, double radius, double arc_angle,
                                             std::optional<double> row_width) {
    if (!(straight_length >= 0.0)) throw InvalidArgument("naive turn: straight length must be >= 0");
    if (!(radius > 0.0)) throw InvalidArgument("naive turn: radius must be > 0");
    if (!(arc_angle > 0.0 && arc_angle < kPi)) throw InvalidArgument("naive turn: arc angle must be in (0, pi)");
    if (row_width && !(2.0 * radius < *row_width))
        throw InvalidArgument("naive turn: turn diameter must be below the row width");
    return {{MotionPrimitive::Kind::straight, straight_length, 0.0, 0.0},
            {MotionPrimitive::Kind::arc, radius * arc_angle, radius, arc_angle}};
}

Pose2 apply_primitives(Pose2 p, std::span<const MotionPrimitive> primitives, TurnDirection dir) {
    const double sgn = dir == TurnDirection::left ? 1.0 : -1.0;
    for (const auto& m : primitives) {
        if (m.kind == MotionPrimitive::Kind::straight) {
            p.x += m.length * std::cos(p.heading);
            p.y += m.length * std::sin(p.heading);
            continue;
        }
        const double h1 = p.heading + sgn * m.angle;
        p.x += sgn * m.radius * (std::sin(h1) - std::sin(p.heading));
        p.y -= sgn * m.radius * (std::cos(h1) - std::cos(p.heading));
        p.heading = h1;
    }
    p.heading = wrap_angle(p.heading);
    return p;
}

double bumper_adjust(std::span<const Point3> points, const VolumeOfInterest& bumper, double radius, double delta,
                     double min_radius) {
    if (!(delta > 0.0)) throw InvalidArgument("bumper: delta must be > 0");
    if (!(min_radius > 0.0)) throw InvalidArgument("bumper: minimum radius must be > 0");
    if (!object_in_volume(points, bumper)) return radius;
    const double mag = std::max(min_radius, std::abs(radius) - delta);
    return radius < 0.0 ? -mag : mag;
}

RobotState lidar_pose(const RobotState& robot, const RobotGeometry& g) {
    auto s = robot;
    s.x += g.lidar_forward * std::cos(robot.heading);
    s.y += g.lidar_forward * std::sin(robot.heading);
    return s;
}

double footprint_clearance(const OrchardWorld& world, const RobotState& robot, const RobotGeometry& g) {
    const double hl = 0.5 * g.length, hw = 0.5 * g.width;
    const double c = std::cos(robot.heading), s = std::sin(robot.heading);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& cyl : world.cylinders()) {
        if (cyl.label != Label::post && cyl.label != Label::trunk) continue;
        const double dx = cyl.x - robot.x, dy = cyl.y - robot.y;
        const double u = c * dx + s * dy, v = -s * dx + c * dy;
        const double ou = std::abs(u) - hl, ov = std::abs(v) - hw;
        const double outside = std::hypot(std::max(ou, 0.0), std::max(ov, 0.0));
        const double d = (ou > 0.0 || ov > 0.0 ? outside : std::max(ou, ov)) - cyl.radius;
        best = std::min(best, d);
    }
    return best;
}

void MissionConfig::validate() const {
    if (!(geometry.length > 0.0 && geometry.width > 0.0)) throw InvalidArgument("mission: robot size must be > 0");
    if (!(dt > 0.0)) throw InvalidArgument("mission: dt must be > 0");
    if (!(max_omega > 0.0)) throw InvalidArgument("mission: max_omega must be > 0");
    if (!(min_turn_radius > 0.0)) throw InvalidArgument("mission: min_turn_radius must be > 0");
    if (!(watchdog_factor >= 1.0 && watchdog_distance > 0.0 && max_time > 0.0))
        throw InvalidArgument("mission: watchdog limits must be positive");
    lidar.validate();
    row.validate();
    gains.validate();
    for (const auto* v : {&hedge, &canopy_left, &canopy_right, &bumper}) v->validate();
}

namespace {

struct Perception {
    LidarFrame frame;
    std::vector<Point3> points;
    std::optional<RowEstimate> row_cache;

    const RowEstimate& row(const RowDetectParams& params) {
        if (!row_cache) row_cache = detect_row(frame, params);
        return *row_cache;
    }
};

}  // namespace

MissionResult run_path(std::span<const PathState> path, const OrchardWorld& world, RobotState robot,
                       const MissionConfig& cfg) {
    validate_path(path);
    cfg.validate();
    MissionResult res;
    std::size_t idx = 0;
    double t = 0.0;
    std::uint64_t tick = 0;
    double entry_odo = robot.odometer;
    double entry_t = 0.0;
    double radius = path[0].goal_turn_radius;
    CanopyDebounce canopy;
    int definite = 0;
    RowFollower follower(cfg.gains);

    auto enter = [&](std::size_t i) {
        idx = i;
        entry_odo = robot.odometer;
        entry_t = t;
        radius = path[i].goal_turn_radius;
        canopy = {static_cast<int>(path[i].boundary == BoundaryCondition::no_canopy ? path[i].boundary_parameter : 5), 0};
        definite = 0;
        res.entries.push_back({path[i].state_id, t, robot.odometer});
    };
    enter(0);

    while (true) {
        const auto& st = path[idx];
        std::optional<Perception> seen;
        auto perceive = [&]() -> Perception& {
            if (!seen) {
                const auto cast = cast_scan(world, lidar_pose(robot, cfg.geometry), cfg.lidar, cfg.seed * 1000003 + tick);
                seen = Perception{cast.frame, cast.frame.points(), std::nullopt};
            }
            return *seen;
        };

        // boundary
        const double travelled = robot.odometer - entry_odo;
        bool done = false;
        double expected = cfg.watchdog_distance;
        switch (st.boundary) {
            case BoundaryCondition::fixed_length:
                done = travelled >= st.boundary_parameter - 1e-9;
                expected = cfg.watchdog_factor * st.boundary_parameter;
                break;
            case BoundaryCondition::no_canopy:
                done = detect_canopy_absence(perceive().points, cfg.canopy_left, cfg.canopy_right, canopy);
                break;
            case BoundaryCondition::hedge_offset: {
                auto vol = cfg.hedge;
                vol.x_max = vol.x_min + st.boundary_parameter;
                done = detect_hedge_proximity(perceive().points, vol);
                break;
            }
            case BoundaryCondition::definite_row: {
                const auto& est = perceive().row(cfg.row);
                const bool ok = est.valid && !est.one_sided && std::abs(est.o_a) <= cfg.definite_row_max_angle;
                definite = ok ? definite + 1 : 0;
                done = definite >= static_cast<int>(st.boundary_parameter);
                break;
            }
        }
        if (done) {
            if (idx + 1 == path.size()) {
                res.completed = true;
                return res;
            }
            enter(idx + 1);
            continue;
        }
        if (travelled > expected || t - entry_t > cfg.max_time) {
            res.aborted_state = st.state_id;
            res.abort_reason = travelled > expected ? "watchdog distance exceeded" : "watchdog time exceeded";
            return res;
        }

        // command
        const TurnDirection dir = st.turn.value_or(cfg.turn);
        const double sgn = dir == TurnDirection::left ? 1.0 : -1.0;
        double v = st.target_speed;
        double omega = 0.0;
        if (st.vertex == VertexType::in_row) {
            auto est = perceive().row(cfg.row);
            // implausible headings count as a missed frame
            if (std::abs(est.o_a) > cfg.row_angle_gate) est.valid = false;
            if (auto w = follower.update(est)) omega = *w;
            else v = 0.0;
        } else {
            if (st.additional == AdditionalParameter::use_bumper) {
                const auto vol = dir == TurnDirection::left ? cfg.bumper : cfg.bumper.mirrored();
                radius = bumper_adjust(perceive().points, vol, radius, st.additional_value, cfg.min_turn_radius);
            }
            if (radius < kStraightRadius) omega = sgn * v / radius;
        }
        omega = std::clamp(omega, -cfg.max_omega, cfg.max_omega);
        robot = step_robot(robot, v, omega, cfg.dt);
        t += cfg.dt;
        ++tick;
        res.trajectory.push_back({t, robot.x, robot.y, robot.heading, st.state_id, v, omega});
        res.poses.push_back(robot);
    }
}

std::vector<ScriptSegment> scenario_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    if (!j.is_array()) throw InvalidArgument("scenario: expected a JSON array");
    std::vector<ScriptSegment> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto& e = j[i];
        const std::string where = "scenario segment " + std::to_string(i);
        ScriptSegment s;
        if (e.is_array()) {
            if (e.size() != 3) throw InvalidArgument(where + ": expected [duration, v, omega]");
            s = {e[0].get<double>(), e[1].get<double>(), e[2].get<double>(), false};
        } else if (e.is_object()) {
            for (const auto& [k, v] : e.items())
                if (k != "duration" && k != "v" && k != "omega" && k != "autonomous")
                    throw InvalidArgument(where + ": unknown key " + k);
            if (!e.contains("duration")) throw InvalidArgument(where + ": missing duration");
            s.duration = e.at("duration").get<double>();
            s.v = e.value("v", 0.0);
            s.omega = e.value("omega", 0.0);
            s.autonomous = e.value("autonomous", false);
            if (s.autonomous && e.contains("omega")) throw InvalidArgument(where + ": autonomous segments take no omega");
        } else {
            throw InvalidArgument(where + ": expected an array or object");
        }
        if (!(s.duration > 0.0 && std::isfinite(s.duration))) throw InvalidArgument(where + ": duration must be > 0");
        if (!std::isfinite(s.v) || !std::isfinite(s.omega)) throw InvalidArgument(where + ": v and omega must be finite");
        out.push_back(s);
    }
    return out;
}

MissionResult run_script(std::span<const ScriptSegment> script, const OrchardWorld& world, RobotState robot,
                         const MissionConfig& cfg) {
    cfg.validate();
    MissionResult res;
    double t = 0.0;
    std::uint64_t tick = 0;
    RowFollower follower(cfg.gains);
    for (std::size_t i = 0; i < script.size(); ++i) {
        const auto& seg = script[i];
        const int id = static_cast<int>(i);
        res.entries.push_back({id, t, robot.odometer});
        const auto steps = static_cast<long>(std::llround(seg.duration / cfg.dt));
        for (long k = 0; k < steps; ++k) {
            double v = seg.v, omega = seg.omega;
            if (seg.autonomous) {
                const auto cast = cast_scan(world, lidar_pose(robot, cfg.geometry), cfg.lidar, cfg.seed * 1000003 + tick);
                auto est = detect_row(cast.frame, cfg.row);
                if (std::abs(est.o_a) > cfg.row_angle_gate) est.valid = false;
                if (auto w = follower.update(est)) omega = std::clamp(*w, -cfg.max_omega, cfg.max_omega);
                else v = omega = 0.0;
            }
            robot = step_robot(robot, v, omega, cfg.dt);
            t += cfg.dt;
            ++tick;
            res.trajectory.push_back({t, robot.x, robot.y, robot.heading, id, v, omega});
            res.poses.push_back(robot);
        }
    }
    res.completed = true;
    return res;
}

void write_trajectory_csv(std::ostream& os, std::span<const TrajectoryPoint> trajectory) {
    os << "t,x,y,heading,state_id,v,omega\n";
    for (const auto& p : trajectory)
        os << format_sig6(p.t) << ',' << format_sig6(p.x) << ',' << format_sig6(p.y) << ',' << format_sig6(p.heading)
           << ',' << p.state_id << ',' << format_sig6(p.v) << ',' << format_sig6(p.omega) << '\n';
}

}  // namespace pergola
