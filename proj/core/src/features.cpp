#include "pergola/features.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace pergola {

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int i) {
        while (parent[static_cast<std::size_t>(i)] != i) {
            auto& p = parent[static_cast<std::size_t>(i)];
            p = parent[static_cast<std::size_t>(p)];
            i = p;
        }
        return i;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
    }
};

double metric_of(std::vector<double> r, PlaneMetric m) {
    switch (m) {
        case PlaneMetric::mean: return std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
        case PlaneMetric::median: return median(std::move(r));
        case PlaneMetric::maximum: return *std::max_element(r.begin(), r.end());
    }
    return 0.0;
}

// best plane over azimuth columns [a0, a1); -1 when the arc is empty
int best_plane(const LidarFrame& f, int a0, int a1, PlaneMetric m) {
    int best = -1;
    double best_v = -std::numeric_limits<double>::infinity();
    for (int p = 0; p < f.planes(); ++p) {
        std::vector<double> r;
        for (int a = a0; a < a1; ++a) {
            const double v = f.range(static_cast<std::size_t>(p), static_cast<std::size_t>(a));
            if (v > 0.0) r.push_back(v);
        }
        if (r.empty()) continue;
        const double v = metric_of(std::move(r), m);
        if (v > best_v) {
            best_v = v;
            best = p;
        }
    }
    return best;
}

double atan_deg(double x) { return rad2deg(std::atan(x)); }

}  // namespace

PlaneMetric plane_metric_from_string(const std::string& s) {
    if (s == "mean") return PlaneMetric::mean;
    if (s == "median") return PlaneMetric::median;
    if (s == "maximum" || s == "max") return PlaneMetric::maximum;
    throw InvalidArgument("unknown plane metric '" + s + "'");
}

std::string to_string(PlaneMetric m) {
    switch (m) {
        case PlaneMetric::mean: return "mean";
        case PlaneMetric::median: return "median";
        case PlaneMetric::maximum: return "maximum";
    }
    return "mean";
}

PlaneSelection select_plane(const LidarFrame& frame, PlaneMetric metric) {
    const int p = best_plane(frame, 0, frame.azimuths(), metric);
    if (p < 0) throw InvalidArgument("select_plane: frame has no returns");
    return {p, frame.plane_points(p)};
}

SegmentedSelection select_plane_segmented(const LidarFrame& frame, int n_segments, PlaneMetric metric) {
    if (n_segments < 1 || frame.azimuths() % n_segments != 0)
        throw InvalidArgument("select_plane_segmented: segment count must divide the azimuth count");
    const int width = frame.azimuths() / n_segments;
    SegmentedSelection out;
    for (int s = 0; s < n_segments; ++s) {
        const int a0 = s * width;
        const int p = best_plane(frame, a0, a0 + width, metric);
        out.planes.push_back(p);
        if (p < 0) continue;
        for (int a = a0; a < a0 + width; ++a)
            if (auto q = frame.point(p, a)) out.points.push_back(*q);
    }
    if (std::all_of(out.planes.begin(), out.planes.end(), [](int p) { return p < 0; }))
        throw InvalidArgument("select_plane_segmented: frame has no returns");
    return out;
}

ScaleModel ScaleModel::for_spec(const LidarSpec& spec) {
    ScaleModel m;
    m.delta_v_deg = spec.n_planes() > 1 ? spec.plane_step_deg() : 2.0;
    m.delta_h_deg = spec.azimuth_step_deg();
    m.max_planes = spec.n_planes();
    m.max_columns = spec.n_azimuths;
    return m;
}

void ScaleModel::validate() const {
    if (!(delta_v_deg > 0 && delta_h_deg > 0 && d_v > 0 && d_h > 0 && max_planes > 0 && max_columns > 0 && p_max > 0))
        throw InvalidArgument("scale model: all parameters must be positive");
}

double planes_on_object(double r_o, const ScaleModel& m) {
    if (!(r_o > 0.0)) throw InvalidArgument("range must be > 0");
    return std::min<double>(m.max_planes, 1.0 + (2.0 / m.delta_v_deg) * atan_deg(m.d_v / (2.0 * r_o)));
}

double columns_on_object(double r_o, const ScaleModel& m) {
    if (!(r_o > 0.0)) throw InvalidArgument("range must be > 0");
    return std::min<double>(m.max_columns, 1.0 + (2.0 / m.delta_h_deg) * atan_deg(m.d_h / (2.0 * r_o)));
}

double density_scale_factor(double r_o, const ScaleModel& m) {
    return m.p_max / (planes_on_object(r_o, m) * columns_on_object(r_o, m));
}

BirdsEyeGrid scaled_density(const LidarFrame& frame, const ScaleModel& model, const GridSpec& grid) {
    model.validate();
    const auto pts = frame.points();
    auto g = rasterize(pts, grid, 1.0);
    for (int r = 0; r < grid.side_px; ++r)
        for (int c = 0; c < grid.side_px; ++c) {
            auto& v = g.cells(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
            if (v == 0.0) continue;
            const auto [x, y] = g.centre_of(r, c);
            v *= density_scale_factor(std::hypot(x, y), model);
        }
    return g;
}

BirdsEyeGrid scaled_density_extract(const LidarFrame& frame, const ScaleModel& model, double threshold,
                                    const GridSpec& grid) {
    auto g = scaled_density(frame, model, grid);
    for (auto& v : g.cells.data()) v = v > threshold ? 1.0 : 0.0;
    return g;
}

double vertical_angle(double r1, double alpha1_deg, double r2, double alpha2_deg) {
    const double a1 = deg2rad(alpha1_deg), a2 = deg2rad(alpha2_deg);
    const double num = r2 * std::sin(a2) - r1 * std::sin(a1);
    const double den = r1 * std::cos(a1) - r2 * std::cos(a2);
    if (den == 0.0) return 90.0;
    return std::abs(rad2deg(std::atan(num / den)));
}

VerticalObjects extract_vertical_objects(const LidarFrame& frame, double angle_threshold_deg, double height_threshold,
                                         const GridSpec& grid) {
    if (!(angle_threshold_deg >= 0.0 && angle_threshold_deg <= 90.0))
        throw InvalidArgument("angle_threshold must be in [0, 90] degrees");
    if (!(height_threshold >= 0.0)) throw InvalidArgument("height_threshold must be >= 0");
    const int np = frame.planes(), na = frame.azimuths();
    auto idx = [na](int p, int a) { return p * na + a; };
    auto rng = [&](int p, int a) { return frame.range(static_cast<std::size_t>(p), static_cast<std::size_t>(a)); };
    UnionFind uf(static_cast<std::size_t>(np * na));
    for (int p = 0; p + 1 < np; ++p) {
        const double a1 = frame.spec.plane_angles_deg[static_cast<std::size_t>(p)];
        const double a2 = frame.spec.plane_angles_deg[static_cast<std::size_t>(p + 1)];
        for (int a = 0; a < na; ++a) {
            const double r1 = rng(p, a);
            if (r1 == 0.0) continue;
            for (int da = -1; da <= 1; ++da) {
                const int b = ((a + da) % na + na) % na;
                const double r2 = rng(p + 1, b);
                if (r2 == 0.0) continue;
                if (vertical_angle(r1, a1, r2, a2) > angle_threshold_deg) uf.unite(idx(p, a), idx(p + 1, b));
            }
        }
    }
    std::vector<int> slot(static_cast<std::size_t>(np * na), -1);
    VerticalObjects out{{}, BirdsEyeGrid(grid)};
    for (int p = 0; p < np; ++p)
        for (int a = 0; a < na; ++a) {
            const auto q = frame.point(p, a);
            if (!q) continue;
            const int root = uf.find(idx(p, a));
            auto& s = slot[static_cast<std::size_t>(root)];
            if (s < 0) {
                s = static_cast<int>(out.objects.size());
                out.objects.push_back({{}, {}, q->z, q->z});
            }
            auto& obj = out.objects[static_cast<std::size_t>(s)];
            obj.cells.emplace_back(p, a);
            obj.points.push_back(*q);
            obj.z_min = std::min(obj.z_min, q->z);
            obj.z_max = std::max(obj.z_max, q->z);
        }
    std::erase_if(out.objects, [&](const VerticalObject& o) { return o.height() < height_threshold; });
    for (const auto& o : out.objects)
        for (const auto& q : o.points)
            if (auto px = out.mask.pixel_of(q.x, q.y))
                out.mask.cells(static_cast<std::size_t>(px->row), static_cast<std::size_t>(px->col)) = 1.0;
    return out;
}

namespace {

void finish(ExtractionScores& s) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.precision = s.tp + s.fp ? static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp) : nan;
    s.recall = s.tp + s.fn ? static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fn) : nan;
    s.specificity = s.tn + s.fp ? static_cast<double>(s.tn) / static_cast<double>(s.tn + s.fp) : nan;
}

}  // namespace

ExtractionScores evaluate_extraction(const Matrix<double>& output, const Matrix<double>& truth) {
    if (!output.same_shape(truth)) throw InvalidArgument("evaluate_extraction: grid shapes differ");
    ExtractionScores s;
    for (std::size_t i = 0; i < output.size(); ++i) {
        const bool o = output.data()[i] != 0.0;
        const bool t = truth.data()[i] != 0.0;
        if (o && t) ++s.tp;
        else if (o) ++s.fp;
        else if (t) ++s.fn;
        else ++s.tn;
    }
    finish(s);
    return s;
}

ExtractionScores pool_scores(const std::vector<ExtractionScores>& scores) {
    ExtractionScores s;
    for (const auto& x : scores) {
        s.tp += x.tp;
        s.fp += x.fp;
        s.tn += x.tn;
        s.fn += x.fn;
    }
    finish(s);
    return s;
}

BirdsEyeGrid points_mask(const std::vector<Point3>& points, const GridSpec& grid) {
    auto g = rasterize(points, grid, 1.0);
    for (auto& v : g.cells.data()) v = v != 0.0 ? 1.0 : 0.0;
    return g;
}

}  // namespace pergola
