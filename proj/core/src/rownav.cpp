#include "pergola/rownav.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace pergola {

namespace {

double dist_xy(const Point3& a, const Point3& b) { return std::hypot(a.x - b.x, a.y - b.y); }

Point3 mean_of(const std::vector<Point3>& pts) {
    Point3 c;
    for (const auto& p : pts) {
        c.x += p.x;
        c.y += p.y;
        c.z += p.z;
    }
    const double n = static_cast<double>(pts.size());
    return {c.x / n, c.y / n, c.z / n};
}

double polyline_length(const std::vector<Point3>& pts) {
    double len = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        len += std::hypot(pts[i].x - pts[i - 1].x, pts[i].y - pts[i - 1].y, pts[i].z - pts[i - 1].z);
    return len;
}

double dist3(const Point3& a, const Point3& b) { return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z); }

struct DisjointSet {
    std::vector<std::size_t> parent;
    explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

}  // namespace

void RowDetectParams::validate() const {
    if (!(cluster_gap > 0 && max_contour > 0 && crowd_radius > 0 && crowd_count > 0 && container_xy_gap > 0 &&
          min_height > 0 && max_height > 0 && row_width > 0 && angle_bin_deg > 0))
        throw InvalidArgument("row params: thresholds must be > 0");
    if (!(min_height < max_height)) throw InvalidArgument("row params: min_height must be < max_height");
}

void ControllerGains::validate() const {
    for (double g : {k_l, k_a, k_f, k_e, w_a, k_gamma})
        if (!std::isfinite(g)) throw InvalidArgument("gains must be finite");
}

std::vector<Cluster> cluster_plane(std::span<const Point3> points, double gap, int plane, bool wrap) {
    std::vector<Cluster> out;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (i == 0 || dist3(points[i], points[i - 1]) >= gap) out.push_back({{}, {}, 0.0, plane});
        out.back().points.push_back(points[i]);
    }
    if (wrap && out.size() > 1 && dist3(points.back(), points.front()) < gap) {
        auto& last = out.back().points;
        last.insert(last.end(), out.front().points.begin(), out.front().points.end());
        out.front().points = std::move(last);
        out.pop_back();
    }
    for (auto& c : out) {
        c.centroid = mean_of(c.points);
        c.contour_length = polyline_length(c.points);
    }
    return out;
}

double linear_offset(std::span<const double> left, std::span<const double> right) {
    if (left.empty() || right.empty()) throw InvalidArgument("linear_offset: both sides need points");
    const double nl = static_cast<double>(left.size());
    const double nr = static_cast<double>(right.size());
    const double sl = std::accumulate(left.begin(), left.end(), 0.0);
    const double sr = std::accumulate(right.begin(), right.end(), 0.0);
    return (nr * sl + nl * sr) / (2.0 * nl * nr);
}

RowEstimate detect_row(const LidarFrame& frame, const RowDetectParams& params) {
    params.validate();
    RowEstimate est;
    auto& dg = est.diag;

    std::vector<Cluster> kept;
    for (int p = 0; p < frame.planes(); ++p) {
        const auto pts = frame.plane_points(p);
        auto clusters = cluster_plane(pts, params.cluster_gap, p, true);
        dg.clusters += static_cast<int>(clusters.size());
        std::erase_if(clusters, [&](const Cluster& c) { return c.contour_length > params.max_contour; });
        dg.clusters_after_contour += static_cast<int>(clusters.size());
        // sweep in x order; stop counting once the cluster is known to be crowded
        std::vector<std::size_t> order(clusters.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return clusters[a].centroid.x < clusters[b].centroid.x; });
        std::vector<bool> crowded(clusters.size(), false);
        for (std::size_t oi = 0; oi < order.size(); ++oi) {
            const auto& ci = clusters[order[oi]].centroid;
            int near = 0;
            for (std::size_t oj = oi + 1; oj < order.size() && near <= params.crowd_count; ++oj) {
                const auto& cj = clusters[order[oj]].centroid;
                if (cj.x - ci.x >= params.crowd_radius) break;
                if (dist3(ci, cj) < params.crowd_radius) ++near;
            }
            for (std::size_t oj = oi; oj-- > 0 && near <= params.crowd_count;) {
                const auto& cj = clusters[order[oj]].centroid;
                if (ci.x - cj.x >= params.crowd_radius) break;
                if (dist3(ci, cj) < params.crowd_radius) ++near;
            }
            crowded[order[oi]] = near > params.crowd_count;
        }
        for (std::size_t i = 0; i < clusters.size(); ++i)
            if (!crowded[i]) kept.push_back(std::move(clusters[i]));
    }
    dg.clusters_after_crowd = static_cast<int>(kept.size());

    DisjointSet ds(kept.size());
    {
        std::vector<std::size_t> order(kept.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return kept[a].centroid.x < kept[b].centroid.x; });
        for (std::size_t oi = 0; oi < order.size(); ++oi)
            for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
                const auto& a = kept[order[oi]].centroid;
                const auto& b = kept[order[oj]].centroid;
                if (b.x - a.x >= params.container_xy_gap) break;
                if (dist_xy(a, b) < params.container_xy_gap) ds.unite(order[oi], order[oj]);
            }
    }
    std::map<std::size_t, Container> by_root;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        auto& c = by_root[ds.find(i)];
        c.points.insert(c.points.end(), kept[i].points.begin(), kept[i].points.end());
    }
    dg.containers = static_cast<int>(by_root.size());
    std::vector<Container> containers;
    for (auto& [root, c] : by_root) {
        c.centroid = mean_of(c.points);
        const auto [lo, hi] = std::minmax_element(c.points.begin(), c.points.end(),
                                                  [](const Point3& a, const Point3& b) { return a.z < b.z; });
        c.z_min = lo->z;
        c.z_max = hi->z;
        if (c.height() >= params.min_height && c.height() <= params.max_height) containers.push_back(std::move(c));
    }
    dg.containers_after_height = static_cast<int>(containers.size());
    if (containers.size() < 2) return est;

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < containers.size(); ++i) {
        std::size_t best = i;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < containers.size(); ++j) {
            if (j == i) continue;
            const double d = dist_xy(containers[i].centroid, containers[j].centroid);
            if (d < bd) {
                bd = d;
                best = j;
            }
        }
        pairs.emplace_back(std::min(i, best), std::max(i, best));
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    dg.pairs = static_cast<int>(pairs.size());
    std::erase_if(pairs, [&](const auto& pr) {
        return dist_xy(containers[pr.first].centroid, containers[pr.second].centroid) > params.row_width;
    });
    dg.pairs_after_distance = static_cast<int>(pairs.size());
    if (pairs.empty()) return est;

    std::map<long, std::vector<double>> bins;
    for (const auto& [i, j] : pairs) {
        const auto& a = containers[i].centroid;
        const auto& b = containers[j].centroid;
        dg.neighbour_pairs.push_back({{a.x, a.y}, {b.x, b.y}});
        const double ang = fold_line_angle(std::atan2(b.y - a.y, b.x - a.x));
        bins[std::lround(rad2deg(ang) / params.angle_bin_deg)].push_back(ang);
    }
    const std::vector<double>* mode = nullptr;
    long mode_key = 0;
    for (const auto& [k, v] : bins) {
        if (!mode || v.size() > mode->size() || (v.size() == mode->size() && std::labs(k) < std::labs(mode_key))) {
            mode = &v;
            mode_key = k;
        }
    }
    dg.mode_count = static_cast<int>(mode->size());
    est.o_a = std::accumulate(mode->begin(), mode->end(), 0.0) / static_cast<double>(mode->size());

    std::vector<bool> used(containers.size(), false);
    for (const auto& [i, j] : pairs) used[i] = used[j] = true;
    const double ca = std::cos(est.o_a), sa = std::sin(est.o_a);
    for (std::size_t i = 0; i < containers.size(); ++i) {
        if (!used[i]) continue;
        const auto& c = containers[i].centroid;
        const double yp = -sa * c.x + ca * c.y;
        if (std::abs(yp) > params.row_width) continue;
        (yp > 0.0 ? est.left : est.right).push_back(yp);
    }
    if (est.left.empty() && est.right.empty()) return est;
    est.valid = true;
    if (!est.left.empty() && !est.right.empty()) {
        est.o_l = linear_offset(est.left, est.right);
    } else {
        est.one_sided = true;
        const auto& side = est.left.empty() ? est.right : est.left;
        const double m = std::accumulate(side.begin(), side.end(), 0.0) / static_cast<double>(side.size());
        est.o_l = est.left.empty() ? m + 0.5 * params.row_width : m - 0.5 * params.row_width;
    }
    return est;
}

double steering_command(double o_l, double o_a, const ControllerGains& gains) { return gains.k_l * o_l + gains.k_a * o_a; }

std::optional<double> RowFollower::update(const RowEstimate& est) {
    if (est.valid) {
        missing_ = 0;
        last_ = steering_command(est.o_l, est.o_a, gains_);
        return last_;
    }
    ++missing_;
    if (missing_ > hold_ || !last_) return std::nullopt;
    return last_;
}

FreeSpaceResult free_space_angle(std::span<const Point2> points, double radius_cap, double half_width,
                                 std::span<const double> angles, double gain) {
    if (angles.empty()) throw InvalidArgument("free_space_angle: empty angle set");
    std::vector<Point2> capped;
    for (const auto& p : points)
        if (std::hypot(p.x, p.y) < radius_cap) capped.push_back(p);
    FreeSpaceResult res;
    for (double g : angles) {
        const double s = std::sin(g), c = std::cos(g);
        int n = 0;
        for (const auto& p : capped)
            if (std::abs(-s * p.x + c * p.y) < half_width) ++n;
        res.counts.push_back(n);
    }
    const int best = *std::min_element(res.counts.begin(), res.counts.end());
    // runs of consecutive minimizers
    double chosen = 0.0;
    std::size_t chosen_len = 0;
    for (std::size_t i = 0; i < angles.size();) {
        if (res.counts[i] != best) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < angles.size() && res.counts[j] == best) ++j;
        const std::size_t len = j - i;
        const double med = len % 2 ? angles[i + len / 2] : 0.5 * (angles[i + len / 2 - 1] + angles[i + len / 2]);
        if (len > chosen_len || (len == chosen_len && std::abs(med) < std::abs(chosen))) {
            chosen = med;
            chosen_len = len;
        }
        i = j;
    }
    res.gamma = chosen;
    res.omega = gain * chosen;
    return res;
}

Centreline centreline_from_mask(const Matrix<double>& mask) {
    const std::size_t w = mask.cols();
    std::vector<Point2> centres;
    for (std::size_t r = 0; r < mask.rows(); ++r) {
        long best_s = -1, best_e = -1;
        for (std::size_t c = 0; c < w;) {
            if (mask(r, c) == 0.0) {
                ++c;
                continue;
            }
            std::size_t e = c;
            while (e + 1 < w && mask(r, e + 1) != 0.0) ++e;
            if (best_s < 0 || static_cast<long>(e - c) > best_e - best_s) {
                best_s = static_cast<long>(c);
                best_e = static_cast<long>(e);
            }
            c = e + 1;
        }
        if (best_s <= 0 || best_e >= static_cast<long>(w) - 1) continue;
        centres.push_back({0.5 * static_cast<double>(best_s + best_e), static_cast<double>(r)});
    }
    if (centres.size() < 10) throw InsufficientMask("mask has fewer than 10 usable rows");
    auto median_point = [](std::span<const Point2> pts) {
        std::vector<double> xs, ys;
        for (const auto& p : pts) {
            xs.push_back(p.x);
            ys.push_back(p.y);
        }
        return Point2{median(xs), median(ys)};
    };
    // centres are already ordered by row
    Centreline out;
    out.valid_rows = static_cast<int>(centres.size());
    out.far_point = median_point(std::span(centres).first(5));
    out.near_point = median_point(std::span(centres).last(5));
    return out;
}

double two_stage_steering(double x_f, double x_e, double x_c, double threshold, double k_f, double k_e,
                          bool foreground_only) {
    if (foreground_only || std::abs(x_c - x_f) > threshold) return k_f * (x_c - x_f);
    return k_e * (x_f - x_e);
}

namespace {

std::pair<double, double> line_through(Point2 a, Point2 b) {
    if (a.x == b.x) throw InvalidArgument("treeline is vertical in lidar x; label it in a rotated frame");
    const double m = (b.y - a.y) / (b.x - a.x);
    return {m, a.y - m * a.x};
}

}  // namespace

LineOffsets ground_truth_offsets(Point2 left_a, Point2 left_b, Point2 right_a, Point2 right_b) {
    const auto [ml, cl] = line_through(left_a, left_b);
    const auto [mr, cr] = line_through(right_a, right_b);
    const double mc = 0.5 * (ml + mr);
    const double cc = 0.5 * (cl + cr);
    const double oa = std::atan(mc);
    return {oa, cc * std::cos(oa)};
}

LineOffsets centreline_offsets(Point2 c1, Point2 c2) {
    const auto [m, c] = line_through(c1, c2);
    const double oa = std::atan(m);
    return {oa, c * std::cos(oa)};
}

double tracking_cost(std::span<const OffsetSample> trajectory, double w_a) {
    if (trajectory.empty()) throw InvalidArgument("tracking_cost: empty trajectory");
    double s = 0.0;
    for (const auto& o : trajectory) s += o.o_l + w_a * o.o_a;
    return s;
}

double tracking_cost_abs(std::span<const OffsetSample> trajectory, double w_a) {
    if (trajectory.empty()) throw InvalidArgument("tracking_cost: empty trajectory");
    double s = 0.0;
    for (const auto& o : trajectory) s += std::abs(o.o_l) + w_a * std::abs(o.o_a);
    return s;
}

}  // namespace pergola
