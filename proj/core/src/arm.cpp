#include "pergola/arm.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace pergola {

namespace {

bool within(const JointLimit& l, double a) { return a >= l.lo - 1e-12 && a <= l.hi + 1e-12; }

// elbow candidates on |p2 - p1| = r1, |p3 - p2| = r2 with u the solved-for axis.
// Callers pick u so that u3 - u1 is the larger chord component.
std::vector<std::pair<double, double>> elbow_uv(double u1, double v1, double u3, double v3, double r1, double r2) {
    const double D = (v1 - v3) / (u3 - u1);
    const double E = (u3 * u3 + v3 * v3 - r2 * r2 - u1 * u1 - v1 * v1 + r1 * r1) / (2.0 * u3 - 2.0 * u1);
    const double A = 1.0 + D * D;
    const double B = 2.0 * D * E - 2.0 * D * u1 - 2.0 * v1;
    const double C = -2.0 * E * u1 + u1 * u1 + v1 * v1 - r1 * r1 + E * E;
    double disc = B * B - 4.0 * A * C;
    const double scale = B * B + std::abs(4.0 * A * C);
    if (disc < 0.0) {
        if (disc < -1e-12 * std::max(scale, 1e-300)) return {};
        disc = 0.0;
    }
    const double s = std::sqrt(disc);
    std::vector<std::pair<double, double>> out;
    for (double v2 : {(-B + s) / (2.0 * A), (-B - s) / (2.0 * A)}) out.emplace_back(D * v2 + E, v2);
    if (s == 0.0) out.pop_back();
    return out;
}

}  // namespace

void ArmGeometry::validate() const {
    if (!(r1 > 0.0 && r2 > 0.0 && r3 > 0.0)) throw InvalidArgument("arm: link lengths must be > 0");
    if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(beta)) throw InvalidArgument("arm: base and beta must be finite");
    for (const auto& l : limits)
        if (!(l.lo <= l.hi)) throw InvalidArgument("arm: joint limit lo > hi");
}

std::vector<JointAngles> ik_planar3(Point2 target, double beta, const ArmGeometry& g) {
    g.validate();
    const double x3 = target.x - g.r3 * std::cos(beta);
    const double y3 = target.y - g.r3 * std::sin(beta);
    const double dx = x3 - g.x1, dy = y3 - g.y1;
    if (dx == 0.0 && dy == 0.0) return {};  // wrist on joint 1: a circle of solutions or none

    std::vector<Point2> elbows;
    if (std::abs(dx) >= std::abs(dy)) {
        for (auto [u, v] : elbow_uv(g.x1, g.y1, x3, y3, g.r1, g.r2)) elbows.push_back({u, v});
    } else {
        for (auto [u, v] : elbow_uv(g.y1, g.x1, y3, x3, g.r1, g.r2)) elbows.push_back({v, u});
    }

    std::vector<JointAngles> out;
    for (const auto& e : elbows) {
        JointAngles q;
        q.a1 = std::atan2((e.y - g.y1) / g.r1, (e.x - g.x1) / g.r1);
        q.a2 = wrap_angle(std::atan2((y3 - e.y) / g.r2, (x3 - e.x) / g.r2) - q.a1);
        q.a3 = wrap_angle(beta - q.a1 - q.a2);
        if (!within(g.limits[0], q.a1) || !within(g.limits[1], q.a2) || !within(g.limits[2], q.a3)) continue;
        const bool dup = std::any_of(out.begin(), out.end(), [&](const JointAngles& o) { return joint_displacement(o, q) < 1e-12; });
        if (!dup) out.push_back(q);
    }
    std::sort(out.begin(), out.end(), [](const JointAngles& a, const JointAngles& b) { return a.a1 < b.a1; });
    return out;
}

std::array<Point2, 4> fk_chain(const JointAngles& q, const ArmGeometry& g) {
    std::array<Point2, 4> p;
    p[0] = {g.x1, g.y1};
    const double c1 = q.a1, c2 = q.a1 + q.a2, c3 = q.a1 + q.a2 + q.a3;
    p[1] = {p[0].x + g.r1 * std::cos(c1), p[0].y + g.r1 * std::sin(c1)};
    p[2] = {p[1].x + g.r2 * std::cos(c2), p[1].y + g.r2 * std::sin(c2)};
    p[3] = {p[2].x + g.r3 * std::cos(c3), p[2].y + g.r3 * std::sin(c3)};
    return p;
}

Point2 fk_planar3(const JointAngles& q, const ArmGeometry& g) { return fk_chain(q, g)[3]; }

double joint_displacement(const JointAngles& a, const JointAngles& b) {
    return std::abs(wrap_angle(a.a1 - b.a1)) + std::abs(wrap_angle(a.a2 - b.a2)) + std::abs(wrap_angle(a.a3 - b.a3));
}

void WorkspaceGrid::validate() const {
    if (!(x_min < x_max && y_min < y_max)) throw InvalidArgument("grid: min must be < max");
    if (!(resolution > 0.0)) throw InvalidArgument("grid: resolution must be > 0");
}

int WorkspaceGrid::nx() const { return static_cast<int>(std::ceil((x_max - x_min) / resolution - 1e-9)); }
int WorkspaceGrid::ny() const { return static_cast<int>(std::ceil((y_max - y_min) / resolution - 1e-9)); }

std::optional<std::pair<int, int>> WorkspaceGrid::cell_of(Point2 p) const {
    const int i = static_cast<int>(std::floor((p.x - x_min) / resolution));
    const int j = static_cast<int>(std::floor((p.y - y_min) / resolution));
    if (i < 0 || j < 0 || i >= nx() || j >= ny()) return std::nullopt;
    return std::pair{i, j};
}

bool WorkspaceMap::in_grid(int i, int j) const noexcept {
    return i >= 0 && j >= 0 && static_cast<std::size_t>(i) < cells.cols() && static_cast<std::size_t>(j) < cells.rows();
}

const std::optional<JointAngles>& WorkspaceMap::at(int i, int j) const {
    if (!in_grid(i, j)) throw InvalidArgument("workspace: cell outside the map");
    return cells(static_cast<std::size_t>(j), static_cast<std::size_t>(i));
}

bool WorkspaceMap::reachable(int i, int j) const { return in_grid(i, j) && at(i, j).has_value(); }

std::optional<int> WorkspaceMap::low_row(int i) const {
    for (int j = 0; j < static_cast<int>(cells.rows()); ++j)
        if (reachable(i, j)) return j;
    return std::nullopt;
}

WorkspaceMap build_workspace(const ArmGeometry& g, double beta, const WorkspaceGrid& grid) {
    g.validate();
    grid.validate();
    const int nx = grid.nx(), ny = grid.ny();
    WorkspaceMap map{grid, beta, Matrix<std::optional<JointAngles>>(static_cast<std::size_t>(ny), static_cast<std::size_t>(nx))};
    // bottom-left first, row by row; neighbours already fixed are W, SW, S, SE
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const auto sols = ik_planar3({grid.x(i), grid.y(j)}, beta, g);
            if (sols.empty()) continue;
            const JointAngles* best = &sols.front();
            double best_cost = std::numeric_limits<double>::infinity();
            for (const auto& s : sols) {
                double cost = 0.0;
                for (auto [di, dj] : {std::pair{-1, 0}, {-1, -1}, {0, -1}, {1, -1}})
                    if (map.reachable(i + di, j + dj)) cost += joint_displacement(s, *map.at(i + di, j + dj));
                if (cost < best_cost) {
                    best_cost = cost;
                    best = &s;
                }
            }
            map.cells(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) = *best;
        }
    return map;
}

void write_workspace_ppm(std::ostream& out, const WorkspaceMap& map) {
    const int nx = static_cast<int>(map.cells.cols()), ny = static_cast<int>(map.cells.rows());
    out << "P6\n" << nx << ' ' << ny << "\n255\n";
    auto byte = [](double a) {
        return static_cast<char>(static_cast<std::uint8_t>(1 + std::lround((wrap_angle(a) + kPi) / (2.0 * kPi) * 254.0)));
    };
    for (int j = ny - 1; j >= 0; --j)
        for (int i = 0; i < nx; ++i) {
            const auto& c = map.at(i, j);
            if (!c) {
                out.put(0).put(0).put(0);
            } else {
                out.put(byte(c->a1)).put(byte(c->a2)).put(byte(c->a3));
            }
        }
}

void write_workspace_csv(std::ostream& out, const WorkspaceMap& map) {
    out << "i,j,x,y,reachable,a1,a2,a3\n";
    for (int j = 0; j < static_cast<int>(map.cells.rows()); ++j)
        for (int i = 0; i < static_cast<int>(map.cells.cols()); ++i) {
            const auto& c = map.at(i, j);
            out << i << ',' << j << ',' << format_sig6(map.grid.x(i)) << ',' << format_sig6(map.grid.y(j)) << ','
                << (c ? 1 : 0) << ',';
            if (c) out << format_sig6(c->a1) << ',' << format_sig6(c->a2) << ',' << format_sig6(c->a3);
            else out << ",,";
            out << '\n';
        }
}

WaypointPlan plan_waypoints(std::pair<int, int> start, std::pair<int, int> target, const WorkspaceMap& map,
                            double raise_offset) {
    if (!(raise_offset >= 0.0)) throw InvalidArgument("plan_waypoints: raise offset must be >= 0");
    const auto [i0, j0] = start;
    const auto [it, jt] = target;
    if (!map.in_grid(it, jt)) throw InvalidArgument("plan_waypoints: target outside the map");
    if (!map.in_grid(i0, j0)) throw InvalidArgument("plan_waypoints: start outside the map");
    if (!map.reachable(i0, j0)) throw InvalidArgument("plan_waypoints: start is unreachable");
    if (!map.reachable(it, jt)) throw InvalidArgument("plan_waypoints: target is unreachable");

    const int dir = it >= i0 ? 1 : -1;
    // column where the ascent happens, kept between start and target
    const int back = static_cast<int>(std::lround(raise_offset / map.grid.resolution));
    int ir = it - dir * back;
    if ((ir - i0) * dir < 0) ir = i0;

    WaypointPlan plan;
    auto visit = [&](int i, int j, WaypointPhase ph) {
        const Waypoint w{i, j, ph};
        if (!map.reachable(i, j)) {
            plan.blocked = w;
            return false;
        }
        plan.waypoints.push_back(w);
        return true;
    };
    for (int i = i0; i != ir;) {
        i += dir;
        if (!visit(i, j0, WaypointPhase::advance)) return plan;
    }
    const int dj = jt >= j0 ? 1 : -1;
    for (int j = j0; j != jt;) {
        j += dj;
        if (!visit(ir, j, WaypointPhase::ascend)) return plan;
    }
    for (int i = ir; i != it;) {
        i += dir;
        if (!visit(i, jt, WaypointPhase::extend)) return plan;
    }
    plan.ok = true;
    return plan;
}

std::vector<Waypoint> retract_waypoints(const WaypointPlan& plan, std::pair<int, int> start, const WorkspaceMap& map) {
    if (!plan.ok) throw InvalidArgument("retract_waypoints: plan is not valid");
    std::vector<Waypoint> path(plan.waypoints.rbegin(), plan.waypoints.rend());
    if (!path.empty()) path.erase(path.begin());  // the target itself
    path.push_back({start.first, start.second, WaypointPhase::advance});
    std::vector<Waypoint> out;
    for (const auto& w : path) {
        out.push_back(w);
        if (map.low_row(w.i) == w.j) break;
    }
    return out;
}

Point3 RigidTransform::apply(const Point3& p) const noexcept {
    return {R[0][0] * p.x + R[0][1] * p.y + R[0][2] * p.z + T.x, R[1][0] * p.x + R[1][1] * p.y + R[1][2] * p.z + T.y,
            R[2][0] * p.x + R[2][1] * p.y + R[2][2] * p.z + T.z};
}

double RigidTransform::determinant() const noexcept {
    return R[0][0] * (R[1][1] * R[2][2] - R[1][2] * R[2][1]) - R[0][1] * (R[1][0] * R[2][2] - R[1][2] * R[2][0]) +
           R[0][2] * (R[1][0] * R[2][1] - R[1][1] * R[2][0]);
}

RigidTransform fit_rigid_transform(std::span<const Point3> a, std::span<const Point3> b) {
    if (a.size() != b.size()) throw InvalidArgument("fit_rigid_transform: point counts differ");
    if (a.size() < 3) throw InvalidArgument("fit_rigid_transform: need at least 3 correspondences");
    auto vec = [](const Point3& p) { return Eigen::Vector3d(p.x, p.y, p.z); };
    Eigen::Vector3d ca = Eigen::Vector3d::Zero(), cb = Eigen::Vector3d::Zero();
    for (std::size_t k = 0; k < a.size(); ++k) {
        ca += vec(a[k]);
        cb += vec(b[k]);
    }
    ca /= static_cast<double>(a.size());
    cb /= static_cast<double>(b.size());

    Eigen::Matrix3d H = Eigen::Matrix3d::Zero(), S = Eigen::Matrix3d::Zero();
    for (std::size_t k = 0; k < a.size(); ++k) {
        const Eigen::Vector3d da = vec(a[k]) - ca;
        H += da * (vec(b[k]) - cb).transpose();
        S += da * da.transpose();
    }
    const Eigen::JacobiSVD<Eigen::Matrix3d> spread(S);
    const auto sv = spread.singularValues();
    if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0)) throw InvalidArgument("fit_rigid_transform: points are collinear or coincident");

    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Matrix3d U = svd.matrixU(), V = svd.matrixV();
    Eigen::Matrix3d fix = Eigen::Matrix3d::Identity();
    fix(2, 2) = (V * U.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    const Eigen::Matrix3d R = V * fix * U.transpose();
    const Eigen::Vector3d T = cb - R * ca;

    RigidTransform out;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out.R[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = R(r, c);
    out.T = {T(0), T(1), T(2)};
    return out;
}

double transform_error(std::span<const Point3> k, std::span<const Point3> c, const RigidTransform& t) {
    if (k.size() != c.size()) throw InvalidArgument("transform_error: point counts differ");
    if (k.empty()) throw InvalidArgument("transform_error: no points");
    double sum = 0.0;
    for (std::size_t n = 0; n < k.size(); ++n) {
        const auto q = t.apply(c[n]);
        sum += std::hypot(k[n].x - q.x, k[n].y - q.y, k[n].z - q.z);
    }
    return sum / static_cast<double>(k.size());
}

double fruit_angle(double x_c, double x_i, double d_cs) {
    if (!(d_cs > 0.0)) throw InvalidArgument("fruit_angle: calyx-stem distance must be > 0");
    double s = (x_c - x_i) / d_cs;
    if (std::abs(s) > 1.0 + 1e-12) throw InvalidArgument("fruit_angle: offset exceeds calyx-stem distance");
    s = std::clamp(s, -1.0, 1.0);
    return std::asin(s);
}

CollisionClass parse_collision_class(std::string_view s) {
    if (s == "fruit") return CollisionClass::fruit;
    if (s == "rigid" || s == "wire" || s == "beam" || s == "branch") return CollisionClass::rigid;
    if (s == "none") return CollisionClass::none;
    throw InvalidArgument("unknown collision class: " + std::string(s));
}

int collision_risk(CollisionClass c) noexcept {
    switch (c) {
        case CollisionClass::fruit: return 3;
        case CollisionClass::rigid: return 9;
        case CollisionClass::none: return 1;
    }
    return 0;
}

int collision_score(std::span<const CollisionClass> classes) {
    int s = 0;
    for (auto c : classes) {
        const int r = collision_risk(c);
        if (r == 0) throw InvalidArgument("unknown collision class");
        s += r;
    }
    return s;
}

}  // namespace pergola
