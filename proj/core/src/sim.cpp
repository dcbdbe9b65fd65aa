#include "pergola/sim.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

namespace pergola {

namespace {

constexpr double kEps = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

// circle/cylinder side plus caps
double hit_cylinder(const Cylinder& c, const Ray& r, double tmax) {
    const auto& o = r.origin;
    const auto& d = r.dir;
    double best = kInf;
    const double ox = o.x - c.x, oy = o.y - c.y;
    const double a = d.x * d.x + d.y * d.y;
    if (a > 1e-18) {
        const double b = ox * d.x + oy * d.y;
        const double cc = ox * ox + oy * oy - c.radius * c.radius;
        const double disc = b * b - a * cc;
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            for (double t : {(-b - sq) / a, (-b + sq) / a}) {
                if (t <= kEps || t >= tmax || t >= best) continue;
                const double z = o.z + t * d.z;
                if (z >= c.z0 && z <= c.z1) {
                    best = t;
                    break;
                }
            }
        }
    }
    if (std::abs(d.z) > 1e-15) {
        for (double zc : {c.z0, c.z1}) {
            const double t = (zc - o.z) / d.z;
            if (t <= kEps || t >= tmax || t >= best) continue;
            const double px = ox + t * d.x, py = oy + t * d.y;
            if (px * px + py * py <= c.radius * c.radius) best = t;
        }
    }
    return best;
}

double hit_box(const Box& b, const Ray& r, double tmax) {
    double t0 = kEps, t1 = tmax;
    const std::array<double, 3> o{r.origin.x, r.origin.y, r.origin.z};
    const std::array<double, 3> d{r.dir.x, r.dir.y, r.dir.z};
    const std::array<double, 3> lo{b.x0, b.y0, b.z0};
    const std::array<double, 3> hi{b.x1, b.y1, b.z1};
    for (int k = 0; k < 3; ++k) {
        if (std::abs(d[k]) < 1e-15) {
            if (o[k] < lo[k] || o[k] > hi[k]) return kInf;
            continue;
        }
        double ta = (lo[k] - o[k]) / d[k];
        double tb = (hi[k] - o[k]) / d[k];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return kInf;
    }
    // origin inside the box counts as no hit
    if (t0 <= kEps) return kInf;
    return t0;
}

double hit_strip(const Strip& s, const Ray& r, double tmax) {
    const double dn = r.dir.x * s.nx + r.dir.y * s.ny;
    if (dn >= -1e-12) return kInf;  // back or edge on
    const double t = ((s.cx - r.origin.x) * s.nx + (s.cy - r.origin.y) * s.ny) / dn;
    if (t <= kEps || t >= tmax) return kInf;
    const double px = r.origin.x + t * r.dir.x - s.cx;
    const double py = r.origin.y + t * r.dir.y - s.cy;
    const double lateral = -px * s.ny + py * s.nx;
    const double z = r.origin.z + t * r.dir.z;
    if (std::abs(lateral) > 0.5 * s.width || z < s.z0 || z > s.z1) return kInf;
    return t;
}

// t-interval where the ray's xy lies inside [x0,x1]x[y0,y1]
bool clip_xy(const Ray& r, double x0, double x1, double y0, double y1, double& ta, double& tb) {
    const std::array<double, 2> o{r.origin.x, r.origin.y};
    const std::array<double, 2> d{r.dir.x, r.dir.y};
    const std::array<double, 2> lo{x0, y0};
    const std::array<double, 2> hi{x1, y1};
    for (int k = 0; k < 2; ++k) {
        if (std::abs(d[k]) < 1e-15) {
            if (o[k] < lo[k] || o[k] > hi[k]) return false;
            continue;
        }
        double a = (lo[k] - o[k]) / d[k];
        double b = (hi[k] - o[k]) / d[k];
        if (a > b) std::swap(a, b);
        ta = std::max(ta, a);
        tb = std::min(tb, b);
    }
    return ta < tb;
}

struct Surfaces {
    const OrchardWorld& w;

    double ground(const Ray& r, double tmax) const {
        const auto& c = w.config();
        const double k = r.dir.z - c.ground_slope_x * r.dir.x - c.ground_slope_y * r.dir.y;
        const double h = r.origin.z - w.ground_z(r.origin.x, r.origin.y);
        if (k >= -1e-15) return kInf;
        const double t = -h / k;
        return (t > kEps && t < tmax) ? t : kInf;
    }

    // first upward crossing of the sagging canopy sheet
    double canopy(const Ray& r, double tmax) const {
        const auto& c = w.config();
        const double k = r.dir.z - c.ground_slope_x * r.dir.x - c.ground_slope_y * r.dir.y;
        if (k <= 1e-15) return kInf;
        const double A = c.sag_amplitude;
        const double L0 = r.origin.z - w.ground_z(r.origin.x, r.origin.y) - c.canopy_height;
        double ta = std::max(kEps, (-A - L0) / k);
        double tb = std::min(tmax, -L0 / k);
        if (!clip_xy(r, 0.0, c.row_length, w.treeline_y(0), w.treeline_y(w.treeline_count() - 1), ta, tb))
            return kInf;
        const double P = c.post_spacing;
        auto f = [&](double t) {
            const double x = r.origin.x + t * r.dir.x;
            return L0 + k * t + 0.5 * A * (1.0 - std::cos(2.0 * kPi * x / P));
        };
        // entering the block already above the sheet means passing over it
        if (f(ta) >= 0.0) return kInf;
        const double period = std::abs(r.dir.x) > 1e-12 ? P / std::abs(r.dir.x) : kInf;
        const double step = std::max(1e-4, std::min(period / 16.0, (tb - ta) / 4.0));
        double lo = ta;
        for (double hi = std::min(tb, ta + step);; hi = std::min(tb, hi + step)) {
            const double fh = f(hi);
            if (fh >= 0.0) {
                double a = lo, b = hi;
                for (int it = 0; it < 60 && b - a > 1e-7; ++it) {
                    const double m = 0.5 * (a + b);
                    (f(m) >= 0.0 ? b : a) = m;
                }
                return b;
            }
            lo = hi;
            if (hi >= tb) break;
        }
        return kInf;
    }
};

std::uint8_t base_intensity(Label l) {
    switch (l) {
        case Label::post: return 45;
        case Label::trunk: return 35;
        case Label::hedge: return 25;
        case Label::canopy: return 20;
        case Label::ground: return 15;
        case Label::weed: return 30;
        case Label::branch: return 28;
        case Label::pedestrian: return 60;
        case Label::boundary_object: return 50;
        default: return 0;
    }
}

// candidate cylinders per world-bearing bucket, built once per pose
class CylinderIndex {
  public:
    static constexpr int kBuckets = 1440;

    CylinderIndex(const std::vector<Cylinder>& cyl, double ox, double oy, double max_range) : cyl_(cyl) {
        buckets_.resize(kBuckets);
        const double width = 2.0 * kPi / kBuckets;
        for (std::size_t i = 0; i < cyl.size(); ++i) {
            const auto& c = cyl[i];
            const double dx = c.x - ox, dy = c.y - oy;
            const double d = std::hypot(dx, dy);
            if (d - c.radius > max_range) continue;
            if (d <= c.radius + 1e-6) {
                always_.push_back(i);
                continue;
            }
            const double centre = std::atan2(dy, dx);
            const double half = std::asin(std::min(1.0, c.radius / d)) + 1e-6;
            const int b0 = static_cast<int>(std::floor((centre - half) / width));
            const int b1 = static_cast<int>(std::floor((centre + half) / width));
            for (int b = b0; b <= b1; ++b) buckets_[static_cast<std::size_t>(((b % kBuckets) + kBuckets) % kBuckets)].push_back(i);
        }
    }

    template <typename Fn>
    void visit(const Ray& r, Fn&& fn) const {
        for (auto i : always_) fn(cyl_[i]);
        if (std::abs(r.dir.x) < 1e-12 && std::abs(r.dir.y) < 1e-12) {
            for (const auto& c : cyl_) fn(c);
            return;
        }
        const double width = 2.0 * kPi / kBuckets;
        const int b = static_cast<int>(std::floor(std::atan2(r.dir.y, r.dir.x) / width));
        for (auto i : buckets_[static_cast<std::size_t>(((b % kBuckets) + kBuckets) % kBuckets)]) fn(cyl_[i]);
    }

  private:
    const std::vector<Cylinder>& cyl_;
    std::vector<std::vector<std::size_t>> buckets_;
    std::vector<std::size_t> always_;
};

template <typename CylVisitor>
std::optional<Hit> trace(const OrchardWorld& w, const Ray& r, double max_range, CylVisitor&& visit_cylinders) {
    Surfaces s{w};
    double best = max_range + 1e-12;
    Hit hit{kInf, Label::none, 0, false};
    auto take = [&](double t, Label l, std::uint8_t inten, bool refl) {
        if (t < best) {
            best = t;
            hit = {t, l, inten, refl};
        }
    };
    take(s.ground(r, best), Label::ground, base_intensity(Label::ground), false);
    visit_cylinders(r, [&](const Cylinder& c) { take(hit_cylinder(c, r, best), c.label, c.intensity, false); });
    for (const auto& b : w.boxes()) take(hit_box(b, r, best), b.label, b.intensity, false);
    for (const auto& st : w.strips()) take(hit_strip(st, r, best), Label::pedestrian, st.intensity, true);
    take(s.canopy(r, best), Label::canopy, base_intensity(Label::canopy), false);
    if (hit.label == Label::none) return std::nullopt;
    return hit;
}

}  // namespace

std::string to_string(Label l) {
    switch (l) {
        case Label::none: return "none";
        case Label::post: return "post";
        case Label::trunk: return "trunk";
        case Label::hedge: return "hedge";
        case Label::canopy: return "canopy";
        case Label::ground: return "ground";
        case Label::weed: return "weed";
        case Label::branch: return "branch";
        case Label::pedestrian: return "pedestrian";
        case Label::boundary_object: return "boundary_object";
    }
    return "none";
}

bool is_structure(Label l) { return l == Label::post || l == Label::trunk || l == Label::hedge; }

void WorldConfig::validate() const {
    auto need = [](bool ok, const char* field, const char* what) {
        if (!ok) throw InvalidArgument(std::string("world: ") + field + " " + what);
    };
    need(row_count >= 1, "row_count", "must be >= 1");
    need(row_width > 2.2, "row_width", "must exceed the robot width (2.2 m)");
    need(row_length > 0.0, "row_length", "must be > 0");
    need(post_spacing > 0.0, "post_spacing", "must be > 0");
    need(post_radius > 0.0, "post_radius", "must be > 0");
    need(trunk_radius_min > 0.0 && trunk_radius_max >= trunk_radius_min, "trunk_radius_min", "must be > 0 and <= max");
    need(trunks_per_bay >= 0, "trunks_per_bay", "must be >= 0");
    need(trunk_jitter >= 0.0, "trunk_jitter", "must be >= 0");
    need(lateral_jitter >= 0.0, "lateral_jitter", "must be >= 0");
    need(trunk_kink >= 0.0, "trunk_kink", "must be >= 0");
    need(canopy_height > 0.0, "canopy_height", "must be > 0");
    need(sag_amplitude >= 0.0 && sag_amplitude < canopy_height, "sag_amplitude", "must be in [0, canopy_height)");
    need(std::abs(ground_slope_x) < 1.0 && std::abs(ground_slope_y) < 1.0, "ground_slope", "must be < 1");
    need(hedge_gap > 0.0, "hedge_gap", "must be > 0");
    need(hedge_height > 0.0, "hedge_height", "must be > 0");
    need(hedge_thickness > 0.0, "hedge_thickness", "must be > 0");
    need(weeds >= 0, "weeds", "must be >= 0");
    need(weed_max_height > 0.0, "weed_max_height", "must be > 0");
    need(branches >= 0, "branches", "must be >= 0");
    need(branch_min_length > 0.0 && branch_max_length >= branch_min_length, "branch_min_length",
         "must be > 0 and <= max");
    need(branch_max_length < canopy_height - sag_amplitude, "branch_max_length", "must stay above the ground");
    for (const auto& p : pedestrians) {
        need(p.height > 1.0, "pedestrians.height", "must be > 1.0");
        need(!p.vest || p.strip_width > 0.0, "pedestrians.strip_width", "must be > 0");
    }
    for (const auto& b : boundary_objects)
        need(b.x1 > b.x0 && b.y1 > b.y0 && b.height > 0.0, "boundary_objects", "must be non-degenerate");
    need(range_noise_sigma >= 0.0, "range_noise_sigma", "must be >= 0");
    need(vest_dropout >= 0.0 && vest_dropout <= 1.0, "vest_dropout", "must be in [0, 1]");
}

namespace {

template <typename T>
void get_opt(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> keys, const char* where) {
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (auto key : keys) ok = ok || k == key;
        if (!ok) throw InvalidArgument(std::string(where) + ": unknown key " + k);
    }
}

}  // namespace

WorldConfig world_config_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    if (!j.is_object()) throw InvalidArgument("world: expected a JSON object");
    check_keys(j,
               {"row_count", "row_width", "row_length", "post_spacing", "post_radius", "trunk_radius_min",
                "trunk_radius_max", "trunks_per_bay", "trunk_jitter", "lateral_jitter", "trunk_kink", "canopy_height",
                "sag_amplitude", "ground_slope_x", "ground_slope_y", "hedges", "hedge_gap", "hedge_height",
                "hedge_thickness", "weeds", "weed_max_height", "branches", "branch_min_length",
                "branch_max_length", "pedestrians", "boundary_objects", "range_noise_sigma", "vest_dropout",
                "seed"},
               "world");
    WorldConfig c;
    get_opt(j, "row_count", c.row_count);
    get_opt(j, "row_width", c.row_width);
    get_opt(j, "row_length", c.row_length);
    get_opt(j, "post_spacing", c.post_spacing);
    get_opt(j, "post_radius", c.post_radius);
    get_opt(j, "trunk_radius_min", c.trunk_radius_min);
    get_opt(j, "trunk_radius_max", c.trunk_radius_max);
    get_opt(j, "trunks_per_bay", c.trunks_per_bay);
    get_opt(j, "trunk_jitter", c.trunk_jitter);
    get_opt(j, "lateral_jitter", c.lateral_jitter);
    get_opt(j, "trunk_kink", c.trunk_kink);
    get_opt(j, "canopy_height", c.canopy_height);
    get_opt(j, "sag_amplitude", c.sag_amplitude);
    get_opt(j, "ground_slope_x", c.ground_slope_x);
    get_opt(j, "ground_slope_y", c.ground_slope_y);
    get_opt(j, "hedges", c.hedges);
    get_opt(j, "hedge_gap", c.hedge_gap);
    get_opt(j, "hedge_height", c.hedge_height);
    get_opt(j, "hedge_thickness", c.hedge_thickness);
    get_opt(j, "weeds", c.weeds);
    get_opt(j, "weed_max_height", c.weed_max_height);
    get_opt(j, "branches", c.branches);
    get_opt(j, "branch_min_length", c.branch_min_length);
    get_opt(j, "branch_max_length", c.branch_max_length);
    get_opt(j, "range_noise_sigma", c.range_noise_sigma);
    get_opt(j, "vest_dropout", c.vest_dropout);
    get_opt(j, "seed", c.seed);
    if (j.contains("pedestrians")) {
        for (const auto& p : j.at("pedestrians")) {
            check_keys(p, {"x", "y", "facing", "height", "vest", "strip_width"}, "world.pedestrians");
            PedestrianSpec ps;
            get_opt(p, "x", ps.x);
            get_opt(p, "y", ps.y);
            get_opt(p, "facing", ps.facing);
            get_opt(p, "height", ps.height);
            get_opt(p, "vest", ps.vest);
            get_opt(p, "strip_width", ps.strip_width);
            c.pedestrians.push_back(ps);
        }
    }
    if (j.contains("boundary_objects")) {
        for (const auto& b : j.at("boundary_objects")) {
            check_keys(b, {"x0", "x1", "y0", "y1", "height"}, "world.boundary_objects");
            c.boundary_objects.push_back(BoxSpec{b.at("x0").get<double>(), b.at("x1").get<double>(),
                                                 b.at("y0").get<double>(), b.at("y1").get<double>(),
                                                 b.at("height").get<double>()});
        }
    }
    c.validate();
    return c;
}

std::string world_config_to_json(const WorldConfig& c) {
    nlohmann::json j{
        {"row_count", c.row_count},
        {"row_width", c.row_width},
        {"row_length", c.row_length},
        {"post_spacing", c.post_spacing},
        {"post_radius", c.post_radius},
        {"trunk_radius_min", c.trunk_radius_min},
        {"trunk_radius_max", c.trunk_radius_max},
        {"trunks_per_bay", c.trunks_per_bay},
        {"trunk_jitter", c.trunk_jitter},
        {"lateral_jitter", c.lateral_jitter},
        {"trunk_kink", c.trunk_kink},
        {"canopy_height", c.canopy_height},
        {"sag_amplitude", c.sag_amplitude},
        {"ground_slope_x", c.ground_slope_x},
        {"ground_slope_y", c.ground_slope_y},
        {"hedges", c.hedges},
        {"hedge_gap", c.hedge_gap},
        {"hedge_height", c.hedge_height},
        {"hedge_thickness", c.hedge_thickness},
        {"weeds", c.weeds},
        {"weed_max_height", c.weed_max_height},
        {"branches", c.branches},
        {"branch_min_length", c.branch_min_length},
        {"branch_max_length", c.branch_max_length},
        {"range_noise_sigma", c.range_noise_sigma},
        {"vest_dropout", c.vest_dropout},
        {"seed", c.seed},
    };
    j["pedestrians"] = nlohmann::json::array();
    for (const auto& p : c.pedestrians)
        j["pedestrians"].push_back({{"x", p.x},
                                    {"y", p.y},
                                    {"facing", p.facing},
                                    {"height", p.height},
                                    {"vest", p.vest},
                                    {"strip_width", p.strip_width}});
    j["boundary_objects"] = nlohmann::json::array();
    for (const auto& b : c.boundary_objects)
        j["boundary_objects"].push_back({{"x0", b.x0}, {"x1", b.x1}, {"y0", b.y0}, {"y1", b.y1}, {"height", b.height}});
    return j.dump(2);
}

OrchardWorld::OrchardWorld(WorldConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };

    const double L = cfg_.row_length;
    const double P = cfg_.post_spacing;
    const int bays = static_cast<int>(std::floor(L / P + 1e-9));
    for (int i = 0; i < treeline_count(); ++i) {
        const double ty = treeline_y(i);
        for (int b = 0; b <= bays; ++b) {
            const double x = b * P;
            const double g = ground_z(x, ty);
            cylinders_.push_back({x, ty, cfg_.post_radius, g, canopy_z(x, ty), Label::post, base_intensity(Label::post)});
        }
        for (int b = 0; b < bays; ++b) {
            for (int k = 0; k < cfg_.trunks_per_bay; ++k) {
                const double slot = P / (cfg_.trunks_per_bay + 1);
                const double jitter = std::min(cfg_.trunk_jitter, 0.45 * slot);
                const double x = b * P + slot * (k + 1) + uni(-jitter, jitter);
                const double y = ty + uni(-cfg_.lateral_jitter, cfg_.lateral_jitter);
                const double r = uni(cfg_.trunk_radius_min, cfg_.trunk_radius_max);
                const auto in = base_intensity(Label::trunk);
                if (cfg_.trunk_kink > 0.0) {
                    // crooked vine: lower and upper sections offset at a kink
                    const double zk = ground_z(x, y) + uni(0.6, 1.4);
                    const double d = uni(0.5, 1.0) * cfg_.trunk_kink;
                    const double phi = uni(-kPi, kPi);
                    const double ux = x + d * std::cos(phi), uy = y + d * std::sin(phi);
                    cylinders_.push_back({x, y, r, ground_z(x, y), zk, Label::trunk, in});
                    cylinders_.push_back({ux, uy, r, zk, canopy_z(ux, uy), Label::trunk, in});
                } else {
                    cylinders_.push_back({x, y, r, ground_z(x, y), canopy_z(x, y), Label::trunk, in});
                }
            }
        }
    }
    if (cfg_.hedges) {
        const double y0 = treeline_y(0) - cfg_.row_width;
        const double y1 = treeline_y(treeline_count() - 1) + cfg_.row_width;
        const double gz = std::min({ground_z(-cfg_.hedge_gap, y0), ground_z(-cfg_.hedge_gap, y1),
                                    ground_z(L + cfg_.hedge_gap, y0), ground_z(L + cfg_.hedge_gap, y1)}) -
                          1.0;
        for (double xf : {L + cfg_.hedge_gap, -cfg_.hedge_gap - cfg_.hedge_thickness}) {
            const double zt = std::max({ground_z(xf, y0), ground_z(xf, y1), ground_z(xf + cfg_.hedge_thickness, y0),
                                        ground_z(xf + cfg_.hedge_thickness, y1)});
            boxes_.push_back({xf, xf + cfg_.hedge_thickness, y0, y1, gz, zt + cfg_.hedge_height, Label::hedge,
                              base_intensity(Label::hedge)});
        }
    }
    for (const auto& b : cfg_.boundary_objects) {
        const double g = std::min({ground_z(b.x0, b.y0), ground_z(b.x0, b.y1), ground_z(b.x1, b.y0), ground_z(b.x1, b.y1)});
        boxes_.push_back({b.x0, b.x1, b.y0, b.y1, g - 1.0, g + b.height, Label::boundary_object,
                          base_intensity(Label::boundary_object)});
    }
    for (int i = 0; i < cfg_.weeds; ++i) {
        const int line = static_cast<int>(u01(rng) * treeline_count()) % treeline_count();
        const double side = u01(rng) < 0.5 ? -1.0 : 1.0;
        const double x = uni(0.0, L);
        const double y = treeline_y(line) + side * uni(0.2, 0.7);
        const double h = uni(0.15, cfg_.weed_max_height);
        const double g = ground_z(x, y);
        cylinders_.push_back({x, y, uni(0.03, 0.1), g - 0.05, g + h, Label::weed, base_intensity(Label::weed)});
    }
    for (int i = 0; i < cfg_.branches; ++i) {
        const double x = uni(0.5, L - 0.5);
        const double y = uni(treeline_y(0), treeline_y(treeline_count() - 1));
        add_branch(x, y, uni(cfg_.branch_min_length, cfg_.branch_max_length), uni(0.03, 0.06));
    }
    for (const auto& p : cfg_.pedestrians) {
        const double g = ground_z(p.x, p.y);
        const double nx = std::cos(p.facing), ny = std::sin(p.facing);
        const double lx = -ny, ly = nx;
        const auto in = base_intensity(Label::pedestrian);
        const double hip = 0.5 * p.height, shoulder = 0.83 * p.height;
        for (double s : {-0.1, 0.1})
            cylinders_.push_back({p.x + s * lx, p.y + s * ly, 0.07, g, g + hip, Label::pedestrian, in});
        cylinders_.push_back({p.x, p.y, 0.17, g + hip, g + shoulder, Label::pedestrian, in});
        cylinders_.push_back({p.x, p.y, 0.1, g + shoulder, g + p.height, Label::pedestrian, in});
        if (p.vest) {
            const auto inten = static_cast<std::uint8_t>(150 + static_cast<int>(u01(rng) * 105.999));
            strips_.push_back({p.x + 0.175 * nx, p.y + 0.175 * ny, nx, ny, p.strip_width, g + hip + 0.05,
                               g + shoulder - 0.05, inten});
        }
    }
}

void OrchardWorld::add_branch(double x, double y, double length, double radius) {
    const double top = canopy_z(x, y);
    cylinders_.push_back({x, y, radius, top - length, top, Label::branch, base_intensity(Label::branch)});
}

int OrchardWorld::row_at(double y) const noexcept {
    const int r = static_cast<int>(std::lround(y / cfg_.row_width));
    return std::clamp(r, 0, cfg_.row_count - 1);
}

double OrchardWorld::ground_z(double x, double y) const noexcept {
    return cfg_.ground_slope_x * x + cfg_.ground_slope_y * y;
}

bool OrchardWorld::inside_block(double x, double y) const noexcept {
    return x >= 0.0 && x <= cfg_.row_length && y >= treeline_y(0) && y <= treeline_y(treeline_count() - 1);
}

double OrchardWorld::canopy_z(double x, double y) const noexcept {
    const double sag = cfg_.sag_amplitude * 0.5 * (1.0 - std::cos(2.0 * kPi * x / cfg_.post_spacing));
    return ground_z(x, y) + cfg_.canopy_height - sag;
}

bool OrchardWorld::operator==(const OrchardWorld& o) const {
    auto cyl_eq = [](const Cylinder& a, const Cylinder& b) {
        return a.x == b.x && a.y == b.y && a.radius == b.radius && a.z0 == b.z0 && a.z1 == b.z1 && a.label == b.label &&
               a.intensity == b.intensity;
    };
    auto box_eq = [](const Box& a, const Box& b) {
        return a.x0 == b.x0 && a.x1 == b.x1 && a.y0 == b.y0 && a.y1 == b.y1 && a.z0 == b.z0 && a.z1 == b.z1 &&
               a.label == b.label;
    };
    auto strip_eq = [](const Strip& a, const Strip& b) {
        return a.cx == b.cx && a.cy == b.cy && a.nx == b.nx && a.ny == b.ny && a.width == b.width && a.z0 == b.z0 &&
               a.z1 == b.z1 && a.intensity == b.intensity;
    };
    return std::equal(cylinders_.begin(), cylinders_.end(), o.cylinders_.begin(), o.cylinders_.end(), cyl_eq) &&
           std::equal(boxes_.begin(), boxes_.end(), o.boxes_.begin(), o.boxes_.end(), box_eq) &&
           std::equal(strips_.begin(), strips_.end(), o.strips_.begin(), o.strips_.end(), strip_eq);
}

RobotState step_robot(const RobotState& s, double v, double omega, double dt) {
    if (!(dt > 0.0)) throw InvalidArgument("step_robot: dt must be > 0");
    RobotState n = s;
    if (std::abs(omega) < 1e-12) {
        n.x += v * dt * std::cos(s.heading);
        n.y += v * dt * std::sin(s.heading);
    } else {
        const double h1 = s.heading + omega * dt;
        n.x += v / omega * (std::sin(h1) - std::sin(s.heading));
        n.y -= v / omega * (std::cos(h1) - std::cos(s.heading));
    }
    n.heading = wrap_angle(s.heading + omega * dt);
    n.odometer += std::abs(v) * dt;
    n.v = v;
    n.omega = omega;
    return n;
}

Offsets true_row_offsets(const OrchardWorld& world, const RobotState& robot, int row) {
    const double dy = world.row_centre_y(row) - robot.y;
    const double c = std::cos(robot.heading);
    const double sgn = c >= 0.0 ? 1.0 : -1.0;
    return {dy * sgn, fold_line_angle(-robot.heading)};
}

std::optional<Hit> cast_ray(const OrchardWorld& world, const Ray& ray, double max_range) {
    return trace(world, ray, max_range, [&](const Ray&, auto&& fn) {
        for (const auto& c : world.cylinders()) fn(c);
    });
}

CastResult cast_scan(const OrchardWorld& world, const RobotState& robot, const LidarSpec& spec, std::uint64_t rng_seed) {
    spec.validate();
    CastResult out{LidarFrame(spec), {}};
    auto& frame = out.frame;
    out.truth.labels = Matrix<Label>(frame.range.rows(), frame.range.cols(), Label::none);
    out.truth.row = world.row_at(robot.y);
    out.truth.offsets = true_row_offsets(world, robot, out.truth.row);

    std::mt19937_64 rng(rng_seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const auto& cfg = world.config();

    const Point3 origin{robot.x, robot.y, world.ground_z(robot.x, robot.y) + spec.mount_height};
    const CylinderIndex index(world.cylinders(), origin.x, origin.y, spec.max_range);
    auto visit = [&](const Ray& r, auto&& fn) { index.visit(r, fn); };

    for (int p = 0; p < spec.n_planes(); ++p) {
        const double alpha = deg2rad(spec.plane_angles_deg[static_cast<std::size_t>(p)]);
        const double ca = std::cos(alpha), sa = std::sin(alpha);
        for (int a = 0; a < spec.n_azimuths; ++a) {
            const double th = robot.heading + deg2rad(spec.azimuth_deg(a));
            const Ray ray{origin, {ca * std::cos(th), ca * std::sin(th), sa}};
            const auto hit = trace(world, ray, spec.max_range, visit);
            if (!hit) continue;
            const auto pi = static_cast<std::size_t>(p), ai = static_cast<std::size_t>(a);
            double r = hit->t;
            if (cfg.range_noise_sigma > 0.0) r = std::clamp(r + cfg.range_noise_sigma * noise(rng), 1e-3, spec.max_range);
            if (hit->reflector && u01(rng) < cfg.vest_dropout) r = 0.0;
            frame.range(pi, ai) = r;
            frame.intensity(pi, ai) = hit->intensity;
            out.truth.labels(pi, ai) = hit->label;
        }
    }
    return out;
}

TruthMasks truth_masks(const LidarFrame& frame, const Matrix<Label>& labels, const GridSpec& grid) {
    if (labels.rows() != frame.range.rows() || labels.cols() != frame.range.cols())
        throw InvalidArgument("truth_masks: label shape mismatch");
    TruthMasks m{BirdsEyeGrid(grid), BirdsEyeGrid(grid)};
    for (int p = 0; p < frame.planes(); ++p)
        for (int a = 0; a < frame.azimuths(); ++a) {
            const auto l = labels(static_cast<std::size_t>(p), static_cast<std::size_t>(a));
            if (!is_structure(l)) continue;
            const auto q = frame.point(p, a);
            if (!q) continue;
            if (auto px = m.all_structure.pixel_of(q->x, q->y)) {
                m.all_structure.cells(static_cast<std::size_t>(px->row), static_cast<std::size_t>(px->col)) = 1.0;
                if (l != Label::hedge)
                    m.posts_trunks.cells(static_cast<std::size_t>(px->row), static_cast<std::size_t>(px->col)) = 1.0;
            }
        }
    return m;
}

std::vector<ScanPoint2> cast_vertical_scan(const OrchardWorld& world, const RobotState& robot,
                                           const VerticalScanSpec& spec) {
    if (!(spec.step_deg > 0.0) || spec.end_deg < spec.start_deg)
        throw InvalidArgument("vertical scan: bad angle range");
    std::vector<ScanPoint2> out;
    const Point3 origin{robot.x, robot.y, world.ground_z(robot.x, robot.y) + spec.mount_height};
    const double lx = -std::sin(robot.heading), ly = std::cos(robot.heading);
    const int n = static_cast<int>(std::floor((spec.end_deg - spec.start_deg) / spec.step_deg + 1e-9)) + 1;
    for (int i = 0; i < n; ++i) {
        const double a = deg2rad(spec.start_deg + i * spec.step_deg);
        const double c = std::cos(a), s = std::sin(a);
        const Ray ray{origin, {lx * c, ly * c, s}};
        if (auto hit = cast_ray(world, ray, spec.max_range))
            out.push_back({hit->t * c, spec.mount_height + hit->t * s, hit->label});
    }
    return out;
}

std::vector<SuiteFrame> make_row_suite(int n_frames, std::uint64_t seed, const LidarSpec& spec) {
    std::vector<SuiteFrame> out;
    out.reserve(static_cast<std::size_t>(n_frames));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };
    for (int i = 0; i < n_frames; ++i) {
        WorldConfig c;
        c.row_count = 3;
        c.row_width = uni(3.6, 5.0);
        c.row_length = 45.0;
        c.ground_slope_x = uni(-0.06, 0.06);
        c.ground_slope_y = uni(-0.06, 0.06);
        c.weeds = 40;
        c.branches = 40;
        c.range_noise_sigma = 0.03;
        c.seed = seed * 1000003ULL + static_cast<std::uint64_t>(i);
        OrchardWorld w(c);
        RobotState r;
        r.y = w.row_centre_y(1) - uni(-0.5, 0.5);
        r.x = uni(10.0, 35.0);
        r.heading = uni(-0.15, 0.15);
        auto cast = cast_scan(w, r, spec, c.seed);
        out.push_back({std::move(w), r, std::move(cast)});
    }
    return out;
}

}  // namespace pergola
