#include "cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "pergola/arm.hpp"
#include "pergola/boom.hpp"
#include "pergola/features.hpp"
#include "pergola/mission.hpp"
#include "pergola/rownav.hpp"
#include "pergola/safety.hpp"
#include "pergola/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pergola::cli {

namespace {

// flat key=value overrides; every key has to be consumed by someone
class Overrides {
  public:
    explicit Overrides(const std::vector<std::string>& kv) {
        for (const auto& s : kv) {
            const auto eq = s.find('=');
            if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
            values_[s.substr(0, eq)] = s.substr(eq + 1);
        }
    }

    bool has(const std::string& k) const { return values_.count(k) != 0; }

    void take(const std::string& k, double& v) {
        if (auto s = pop(k)) v = to_double(k, *s);
    }
    void take(const std::string& k, int& v) {
        if (auto s = pop(k)) {
            const double d = to_double(k, *s);
            if (d != std::floor(d)) throw UsageError("--set " + k + " expects an integer");
            v = static_cast<int>(d);
        }
    }
    void take(const std::string& k, std::string& v) {
        if (auto s = pop(k)) v = *s;
    }
    void take(const std::string& k, bool& v) {
        if (auto s = pop(k)) {
            if (*s == "1" || *s == "true") v = true;
            else if (*s == "0" || *s == "false") v = false;
            else throw UsageError("--set " + k + " expects true/false");
        }
    }

    // remaining keys patched into a JSON object; unknown keys are rejected
    void patch(json& obj) {
        for (auto it = values_.begin(); it != values_.end();) {
            if (!obj.contains(it->first)) {
                ++it;
                continue;
            }
            json v;
            try {
                v = json::parse(it->second);
            } catch (const json::parse_error&) {
                v = it->second;
            }
            auto& slot = obj[it->first];
            const bool ok = (slot.is_number() && v.is_number()) || (slot.is_boolean() && v.is_boolean()) ||
                            (slot.is_string() && v.is_string()) || (slot.is_array() && v.is_array());
            if (!ok) throw UsageError("--set " + it->first + ": value has the wrong type");
            slot = v;
            it = values_.erase(it);
        }
    }

    void finish() const {
        if (values_.empty()) return;
        std::string keys;
        for (const auto& [k, v] : values_) keys += (keys.empty() ? "" : ", ") + k;
        throw UsageError("unknown --set key(s): " + keys);
    }

  private:
    std::optional<std::string> pop(const std::string& k) {
        auto it = values_.find(k);
        if (it == values_.end()) return std::nullopt;
        auto s = it->second;
        values_.erase(it);
        return s;
    }
    static double to_double(const std::string& k, const std::string& s) {
        std::size_t n = 0;
        double d = 0.0;
        try {
            d = std::stod(s, &n);
        } catch (const std::exception&) {
            n = 0;
        }
        if (n != s.size()) throw UsageError("--set " + k + " expects a number, got '" + s + "'");
        return d;
    }

    std::map<std::string, std::string> values_;
};

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

// doubles in JSON output carry 6 significant digits
double sig6(double v) { return std::isfinite(v) ? std::stod(format_sig6(v)) : v; }

std::uint64_t require_seed(const std::optional<std::uint64_t>& seed) {
    if (!seed) throw UsageError("--seed is required for this command");
    return *seed;
}

WorldConfig load_world(const std::string& path, Overrides& ov, std::uint64_t seed) {
    json j = json::parse(path.empty() ? world_config_to_json(WorldConfig{}) : read_text(path));
    if (ov.has("seed")) throw UsageError("use --seed rather than --set seed");
    json full = json::parse(world_config_to_json(world_config_from_json(j.dump())));
    ov.patch(full);
    auto cfg = world_config_from_json(full.dump());
    cfg.seed = seed;
    return cfg;
}

std::vector<PathState> load_path(const std::string& path) {
    return path.empty() ? reference_path() : path_from_json(read_text(path));
}

TurnDirection parse_turn(const std::string& s) {
    if (s == "left") return TurnDirection::left;
    if (s == "right") return TurnDirection::right;
    throw UsageError("--turn expects left or right");
}

void take_mission(Overrides& ov, MissionConfig& mc) {
    int az = mc.lidar.n_azimuths;
    ov.take("azimuths", az);
    mc.lidar = LidarSpec::vlp16(az);
    ov.take("dt", mc.dt);
    ov.take("max_omega", mc.max_omega);
    ov.take("min_turn_radius", mc.min_turn_radius);
    ov.take("definite_row_max_angle", mc.definite_row_max_angle);
    ov.take("row_angle_gate", mc.row_angle_gate);
    ov.take("watchdog_factor", mc.watchdog_factor);
    ov.take("watchdog_distance", mc.watchdog_distance);
    ov.take("max_time", mc.max_time);
    ov.take("k_l", mc.gains.k_l);
    ov.take("k_a", mc.gains.k_a);
}

void take_row_params(Overrides& ov, RowDetectParams& p) {
    ov.take("cluster_gap", p.cluster_gap);
    ov.take("max_contour", p.max_contour);
    ov.take("crowd_radius", p.crowd_radius);
    ov.take("crowd_count", p.crowd_count);
    ov.take("container_xy_gap", p.container_xy_gap);
    ov.take("min_height", p.min_height);
    ov.take("max_height", p.max_height);
    ov.take("row_width", p.row_width);
    ov.take("angle_bin_deg", p.angle_bin_deg);
    p.validate();
}

GridSpec take_grid(Overrides& ov) {
    GridSpec g;
    ov.take("side_px", g.side_px);
    ov.take("metres_per_px", g.metres_per_px);
    g.validate();
    return g;
}

VolumeOfInterest volume_from(const json& j, VolumeOfInterest v) {
    for (const auto& [k, val] : j.items()) {
        if (k == "x_min") v.x_min = val.get<double>();
        else if (k == "x_max") v.x_max = val.get<double>();
        else if (k == "y_min") v.y_min = val.get<double>();
        else if (k == "y_max") v.y_max = val.get<double>();
        else if (k == "z_min") v.z_min = val.get<double>();
        else if (k == "z_max") v.z_max = val.get<double>();
        else if (k == "count_threshold") v.count_threshold = val.get<int>();
        else throw InvalidArgument("zone: unknown key " + k);
    }
    v.validate();
    return v;
}

Matrix<double> read_matrix(const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".pgm") return read_pgm(path);
    // plain CSV of numbers, one matrix row per line
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        std::vector<double> r;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                r.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ParseError("not a number: '" + cell + "'", n);
            }
        }
        if (!rows.empty() && r.size() != rows.front().size()) throw ParseError("ragged row", n);
        rows.push_back(std::move(r));
    }
    Matrix<double> m(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t k = 0; k < rows[i].size(); ++k) m(i, k) = rows[i][k];
    return m;
}

void write_matrix(const std::string& path, const Matrix<double>& m) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".pgm") return write_pgm(path, m);
    auto out = open_out(path);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t k = 0; k < m.cols(); ++k) out << (k ? "," : "") << format_sig6(m(i, k));
        out << '\n';
    }
}

std::string scores_header() { return "tp,fp,tn,fn,precision,recall,specificity"; }

std::string scores_row(const ExtractionScores& s) {
    std::ostringstream os;
    os << s.tp << ',' << s.fp << ',' << s.tn << ',' << s.fn << ',' << format_sig6(s.precision) << ','
       << format_sig6(s.recall) << ',' << format_sig6(s.specificity);
    return os.str();
}

// ---- subcommands ----

struct SimulateOpts {
    std::string world, path, script, out, turn = "left";
    std::optional<std::uint64_t> seed;
    double x = 2.0, y = 0.0, heading = 0.0;
    int frame_every = 10;
    std::vector<std::string> set;
};

int run_simulate(const SimulateOpts& o, std::ostream& err) {
    Overrides ov(o.set);
    const auto seed = require_seed(o.seed);
    MissionConfig mc;
    take_mission(ov, mc);
    const auto cfg = load_world(o.world, ov, seed);
    ov.finish();
    if (o.frame_every < 0) throw UsageError("--frame-every must be >= 0");
    const OrchardWorld world(cfg);
    mc.row.row_width = cfg.row_width;
    mc.seed = seed;
    mc.turn = parse_turn(o.turn);

    fs::create_directories(fs::path(o.out) / "frames");
    open_out((fs::path(o.out) / "world.json").string()) << world_config_to_json(cfg) << '\n';

    RobotState start;
    start.x = o.x;
    start.y = o.y;
    start.heading = o.heading;
    std::vector<RobotState> poses{start};
    if (!o.path.empty() && !o.script.empty()) throw UsageError("simulate takes --path or --script, not both");
    if (!o.script.empty()) {
        const auto r = run_script(scenario_from_json(read_text(o.script)), world, start, mc);
        auto tr = open_out((fs::path(o.out) / "trajectory.csv").string());
        write_trajectory_csv(tr, r.trajectory);
        poses.insert(poses.end(), r.poses.begin(), r.poses.end());
    }
    if (!o.path.empty()) {
        const auto path = load_path(o.path);
        const auto r = run_path(path, world, start, mc);
        auto tr = open_out((fs::path(o.out) / "trajectory.csv").string());
        write_trajectory_csv(tr, r.trajectory);
        poses.insert(poses.end(), r.poses.begin(), r.poses.end());
        if (!r.completed)
            err << "mission aborted in state " << r.aborted_state.value_or(-1) << ": " << r.abort_reason << '\n';
    }

    auto index = open_out((fs::path(o.out) / "frames.csv").string());
    index << "frame,x,y,heading,o_l,o_a\n";
    const std::size_t every = static_cast<std::size_t>(o.frame_every);
    for (std::size_t k = 0; every > 0 && k < poses.size(); k += every) {
        const auto lp = lidar_pose(poses[k], mc.geometry);
        const auto cast = cast_scan(world, lp, mc.lidar, seed * 1000003 + k);
        std::ostringstream name;
        name << "frame_" << std::setw(6) << std::setfill('0') << k << ".csv";
        write_frame_csv((fs::path(o.out) / "frames" / name.str()).string(), cast.frame);
        index << name.str() << ',' << format_sig6(lp.x) << ',' << format_sig6(lp.y) << ',' << format_sig6(lp.heading)
              << ',' << format_sig6(cast.truth.offsets.o_l) << ',' << format_sig6(cast.truth.offsets.o_a) << '\n';
    }
    return kOk;
}

struct DetectRowOpts {
    std::string frame, mask, diagnostics;
    std::vector<std::string> set;
};

int run_detect_row(const DetectRowOpts& o, std::ostream& out) {
    Overrides ov(o.set);
    if (o.frame.empty() == o.mask.empty()) throw UsageError("detect-row needs exactly one of --frame or --mask");
    if (!o.mask.empty()) {
        ov.finish();
        const auto c = centreline_from_mask(read_pgm(o.mask));
        out << "far_col,far_row,near_col,near_row,valid_rows\n"
            << format_sig6(c.far_point.x) << ',' << format_sig6(c.far_point.y) << ',' << format_sig6(c.near_point.x)
            << ',' << format_sig6(c.near_point.y) << ',' << c.valid_rows << '\n';
        return kOk;
    }
    RowDetectParams p;
    take_row_params(ov, p);
    ov.finish();
    const auto est = detect_row(read_frame_csv(o.frame), p);
    if (!o.diagnostics.empty()) {
        const auto& d = est.diag;
        json j{{"valid", est.valid},
               {"one_sided", est.one_sided},
               {"clusters", d.clusters},
               {"clusters_after_contour", d.clusters_after_contour},
               {"clusters_after_crowd", d.clusters_after_crowd},
               {"containers", d.containers},
               {"containers_after_height", d.containers_after_height},
               {"pairs", d.pairs},
               {"pairs_after_distance", d.pairs_after_distance},
               {"mode_count", d.mode_count},
               {"left_points", est.left.size()},
               {"right_points", est.right.size()}};
        open_out(o.diagnostics) << j.dump(2) << '\n';
    }
    if (!est.valid) throw std::runtime_error("no row detected");
    out << "o_l_m,o_a_rad\n" << format_sig6(est.o_l) << ',' << format_sig6(est.o_a) << '\n';
    return kOk;
}

struct ExtractOpts {
    std::string method, frame, out, grid_csv;
    std::vector<std::string> set;
};

constexpr double kDefaultDensityThreshold = 127.0;

int run_extract(const ExtractOpts& o, std::ostream&) {
    Overrides ov(o.set);
    const auto grid = take_grid(ov);
    const auto frame = read_frame_csv(o.frame);
    BirdsEyeGrid mask;
    if (o.method == "plane") {
        std::string metric = "mean";
        int segments = 1;
        ov.take("metric", metric);
        ov.take("segments", segments);
        ov.finish();
        const auto sel = select_plane_segmented(frame, segments, plane_metric_from_string(metric));
        mask = points_mask(sel.points, grid);
    } else if (o.method == "density") {
        auto model = ScaleModel::for_spec(frame.spec);
        double threshold = kDefaultDensityThreshold;
        ov.take("threshold", threshold);
        ov.take("d_v", model.d_v);
        ov.take("d_h", model.d_h);
        ov.finish();
        mask = scaled_density_extract(frame, model, threshold, grid);
    } else if (o.method == "vertical") {
        double angle = 45.0, height = 0.45;
        ov.take("angle", angle);
        ov.take("height", height);
        ov.finish();
        mask = extract_vertical_objects(frame, angle, height, grid).mask;
    } else {
        throw UsageError("--method must be plane, density or vertical");
    }
    write_pgm(o.out, mask.cells);
    if (!o.grid_csv.empty()) {
        auto f = open_out(o.grid_csv);
        write_grid_csv(f, mask);
    }
    return kOk;
}

struct EvaluateOpts {
    std::string pred, truth;
};

int run_evaluate(const EvaluateOpts& o, std::ostream& out) {
    const auto s = evaluate_extraction(read_pgm(o.pred), read_pgm(o.truth));
    out << scores_header() << '\n' << scores_row(s) << '\n';
    return kOk;
}

struct NavigateOpts {
    std::string world, path, out, turn = "left";
    std::optional<std::uint64_t> seed;
    double x = 2.0, y = 0.0, heading = 0.0;
    std::vector<std::string> set;
};

int run_navigate(const NavigateOpts& o, std::ostream& out, std::ostream& err) {
    Overrides ov(o.set);
    const auto seed = require_seed(o.seed);
    MissionConfig mc;
    take_mission(ov, mc);
    const auto cfg = load_world(o.world, ov, seed);
    ov.finish();
    const OrchardWorld world(cfg);
    mc.row.row_width = cfg.row_width;
    mc.seed = seed;
    mc.turn = parse_turn(o.turn);
    RobotState start;
    start.x = o.x;
    start.y = o.y;
    start.heading = o.heading;

    const auto r = run_path(load_path(o.path), world, start, mc);
    if (!o.out.empty()) {
        auto f = open_out(o.out);
        write_trajectory_csv(f, r.trajectory);
    }
    double clearance = std::numeric_limits<double>::infinity();
    for (const auto& p : r.poses) clearance = std::min(clearance, footprint_clearance(world, p, mc.geometry));
    json states = json::array();
    for (const auto& e : r.entries) states.push_back({{"state_id", e.state_id}, {"t", sig6(e.t)}, {"odometer", sig6(e.odometer)}});
    json j{{"completed", r.completed},
           {"aborted_state", r.aborted_state ? json(*r.aborted_state) : json(nullptr)},
           {"abort_reason", r.abort_reason},
           {"duration_s", r.trajectory.empty() ? 0.0 : sig6(r.trajectory.back().t)},
           {"distance_m", r.poses.empty() ? 0.0 : sig6(r.poses.back().odometer)},
           {"min_clearance_m", std::isfinite(clearance) ? json(sig6(clearance)) : json(nullptr)},
           {"states", states}};
    out << j.dump() << '\n';
    if (!r.completed) {
        err << "mission aborted: " << r.abort_reason << '\n';
        return kDataError;
    }
    return kOk;
}

struct SafetyOpts {
    std::string zones;
    std::vector<std::string> frames;
    bool fill = false;
    std::vector<std::string> set;
};

// decelerate / stop boxes ahead of the lidar
const VolumeOfInterest kDecelZone{0.0, 6.0, -1.5, 1.5, -1.0, 2.0, 1};
const VolumeOfInterest kStopZone{0.0, 2.5, -1.5, 1.5, -1.0, 2.0, 1};

int run_safety(const SafetyOpts& o, std::ostream& out) {
    Overrides ov(o.set);
    VestParams vp;
    ov.take("intensity_threshold", vp.intensity_threshold);
    ov.take("dilation_iterations", vp.dilation_iterations);
    ov.take("band_low_pct", vp.band_low_pct);
    ov.take("band_high_pct", vp.band_high_pct);
    ov.take("band_pick_pct", vp.band_pick_pct);
    ov.finish();
    vp.validate();
    auto decel = kDecelZone, stop = kStopZone;
    if (!o.zones.empty()) {
        const auto j = json::parse(read_text(o.zones));
        for (const auto& [k, v] : j.items()) {
            if (k == "decelerate") decel = volume_from(v, decel);
            else if (k == "stop") stop = volume_from(v, stop);
            else throw InvalidArgument("zones: unknown key " + k);
        }
    }
    StopLatch latch;
    for (const auto& path : o.frames) {
        auto frame = read_frame_csv(path);
        if (o.fill) frame = fill_reflector_ranges(frame, vp.intensity_threshold);
        const auto dets = detect_vests(frame, decel, stop, vp);
        json arr = json::array();
        bool slow = false, halt = false;
        for (const auto& d : dets) {
            arr.push_back({{"x", sig6(d.position.x)},
                           {"y", sig6(d.position.y)},
                           {"z", sig6(d.position.z)},
                           {"reflector_pixels", d.reflector_pixels.size()},
                           {"decelerate", d.decelerate},
                           {"stop", d.stop}});
            slow = slow || d.decelerate;
            halt = halt || d.stop;
        }
        latch.update(halt);
        out << json{{"frame", path}, {"detections", arr}, {"decel", slow || latch.stopped()}, {"stop", latch.stopped()}}.dump()
            << '\n';
    }
    return kOk;
}

struct BoomOpts {
    std::string scans, out, disparity_a, disparity_b;
    double threshold = 3.0;
    std::vector<std::string> set;
};

int run_boom(const BoomOpts& o, std::ostream& out) {
    Overrides ov(o.set);
    if (!o.disparity_a.empty() || !o.disparity_b.empty()) {
        ov.finish();
        if (o.disparity_a.empty() || o.disparity_b.empty() || o.out.empty())
            throw UsageError("disparity mode needs --disparity-a, --disparity-b and --out");
        write_matrix(o.out, combine_disparities(read_matrix(o.disparity_a), read_matrix(o.disparity_b), o.threshold));
        return kOk;
    }
    if (o.scans.empty()) throw UsageError("boom-nav needs --scans or the disparity inputs");
    double half_width = 1.0, z_floor = 0.8, percentile = 10.0, offset = 0.0;
    std::string mode = "minimum";
    BoomConfig bc;
    ov.take("half_width", half_width);
    ov.take("z_floor", z_floor);
    ov.take("percentile", percentile);
    ov.take("offset", offset);
    ov.take("sensor_to_boom", bc.sensor_to_boom);
    ov.take("min_height", bc.min_height);
    ov.take("mode", mode);
    ov.finish();
    if (mode == "minimum") bc.mode = BoomMode::minimum;
    else if (mode == "median") bc.mode = BoomMode::median;
    else throw UsageError("--set mode expects minimum or median");
    BoomController ctl(bc);

    // scan,odometry,y,z with the rows of one scan contiguous
    std::ifstream in(o.scans);
    if (!in) throw std::runtime_error("cannot open " + o.scans);
    std::string line;
    std::size_t n = 0;
    if (!std::getline(in, line) || line != "scan,odometry,y,z") throw ParseError("expected header scan,odometry,y,z", 1);
    ++n;
    struct Scan {
        long id;
        double odometry;
        std::vector<ScanPointYZ> pts;
    };
    std::vector<Scan> scans;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string f[4];
        for (auto& s : f)
            if (!std::getline(ss, s, ',')) throw ParseError("expected 4 fields", n);
        long id = 0;
        double odo = 0, y = 0, z = 0;
        try {
            id = std::stol(f[0]);
            odo = std::stod(f[1]);
            y = std::stod(f[2]);
            z = std::stod(f[3]);
        } catch (const std::exception&) {
            throw ParseError("malformed number", n);
        }
        if (scans.empty() || scans.back().id != id) {
            if (!scans.empty() && odo < scans.back().odometry) throw ParseError("odometry decreases", n);
            scans.push_back({id, odo, {}});
        }
        scans.back().pts.push_back({y, z});
    }

    std::ofstream file;
    if (!o.out.empty()) file = open_out(o.out);
    std::ostream& dst = o.out.empty() ? out : file;
    dst << "scan,odometry,target,set_point\n";
    double last = scans.empty() ? 0.0 : scans.front().odometry;
    for (const auto& s : scans) {
        const auto roi = boom_roi(s.pts, half_width, z_floor);
        const auto target = scan_target(roi, percentile, offset);
        const double sp = ctl.update(s.odometry - last, target);
        last = s.odometry;
        dst << s.id << ',' << format_sig6(s.odometry) << ',' << (target ? format_sig6(*target) : "") << ','
            << format_sig6(sp) << '\n';
    }
    return kOk;
}

struct IkOpts {
    std::vector<double> target;
    std::optional<double> beta;
    std::string workspace;
    std::vector<std::string> set;
};

int run_ik(const IkOpts& o, std::ostream& out) {
    Overrides ov(o.set);
    ArmGeometry g;
    ov.take("r1", g.r1);
    ov.take("r2", g.r2);
    ov.take("r3", g.r3);
    ov.take("x1", g.x1);
    ov.take("y1", g.y1);
    for (int k = 0; k < 3; ++k) {
        ov.take("a" + std::to_string(k + 1) + "_min", g.limits[static_cast<std::size_t>(k)].lo);
        ov.take("a" + std::to_string(k + 1) + "_max", g.limits[static_cast<std::size_t>(k)].hi);
    }
    WorkspaceGrid grid;
    ov.take("x_min", grid.x_min);
    ov.take("x_max", grid.x_max);
    ov.take("y_min", grid.y_min);
    ov.take("y_max", grid.y_max);
    ov.take("resolution", grid.resolution);
    ov.finish();
    if (o.beta) g.beta = *o.beta;
    g.validate();
    if (o.target.empty() && o.workspace.empty()) throw UsageError("ik needs --target and/or --workspace");

    if (!o.target.empty()) {
        const auto sols = ik_planar3({o.target[0], o.target[1]}, g);
        json arr = json::array();
        for (const auto& q : sols) arr.push_back({sig6(q.a1), sig6(q.a2), sig6(q.a3)});
        out << json{{"target", {sig6(o.target[0]), sig6(o.target[1])}}, {"beta", sig6(g.beta)}, {"reachable", !sols.empty()},
                    {"solutions", arr}}
                   .dump()
            << '\n';
    }
    if (!o.workspace.empty()) {
        const auto map = build_workspace(g, g.beta, grid);
        auto ppm = open_out(o.workspace + ".ppm");
        write_workspace_ppm(ppm, map);
        auto csv = open_out(o.workspace + ".csv");
        write_workspace_csv(csv, map);
    }
    return kOk;
}

struct SweepOpts {
    std::string pipeline, out, truth = "structure";
    std::vector<std::string> grid;
    std::optional<std::uint64_t> seed;
    int frames = 30;
    int azimuths = 900;
    bool no_runtime = false;
};

using Cell = std::vector<std::pair<std::string, std::string>>;

int run_sweep(const SweepOpts& o, std::ostream& out) {
    const auto seed = require_seed(o.seed);
    if (o.frames < 1) throw UsageError("--frames must be >= 1");
    if (o.truth != "structure" && o.truth != "posts") throw UsageError("--truth must be structure or posts");
    std::vector<std::string> allowed;
    if (o.pipeline == "plane") allowed = {"segments", "metric"};
    else if (o.pipeline == "density") allowed = {"threshold", "d_v", "d_h"};
    else if (o.pipeline == "vertical") allowed = {"angle", "height"};
    else throw UsageError("--pipeline must be plane, density or vertical");

    std::vector<std::pair<std::string, std::vector<std::string>>> axes;
    for (const auto& g : o.grid) {
        const auto eq = g.find('=');
        if (eq == std::string::npos) throw UsageError("--grid expects key=v1,v2,...");
        const auto key = g.substr(0, eq);
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw UsageError("unknown grid key '" + key + "' for pipeline " + o.pipeline);
        std::vector<std::string> vals;
        std::stringstream ss(g.substr(eq + 1));
        for (std::string v; std::getline(ss, v, ',');)
            if (!v.empty()) vals.push_back(v);
        if (vals.empty()) throw UsageError("grid key '" + key + "' has no values");
        axes.emplace_back(key, std::move(vals));
    }
    if (axes.empty()) throw UsageError("sweep needs at least one --grid");

    // cartesian product, last axis fastest
    std::vector<Cell> cells{{}};
    for (const auto& [k, vals] : axes) {
        std::vector<Cell> next;
        for (const auto& c : cells)
            for (const auto& v : vals) {
                auto d = c;
                d.emplace_back(k, v);
                next.push_back(std::move(d));
            }
        cells = std::move(next);
    }

    const auto spec = LidarSpec::vlp16(o.azimuths);
    const auto suite = make_row_suite(o.frames, seed, spec);
    std::vector<Matrix<double>> truth;
    for (const auto& f : suite) {
        const auto t = truth_masks(f.cast.frame, f.cast.truth.labels, {});
        truth.push_back(o.truth == "posts" ? t.posts_trunks.cells : t.all_structure.cells);
    }

    std::ofstream file;
    if (!o.out.empty()) file = open_out(o.out);
    std::ostream& dst = o.out.empty() ? out : file;
    for (const auto& [k, v] : axes) dst << k << ',';
    dst << "precision,recall" << (o.no_runtime ? "" : ",runtime_s") << ",status\n";

    for (const auto& cell : cells) {
        std::vector<std::string> kv;
        for (const auto& [k, v] : cell) kv.push_back(k + "=" + v);
        std::string status = "ok";
        ExtractionScores pooled;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            Overrides ov(kv);
            std::vector<ExtractionScores> scores;
            if (o.pipeline == "plane") {
                std::string metric = "mean";
                int segments = 1;
                ov.take("metric", metric);
                ov.take("segments", segments);
                ov.finish();
                const auto m = plane_metric_from_string(metric);
                for (std::size_t i = 0; i < suite.size(); ++i) {
                    const auto sel = select_plane_segmented(suite[i].cast.frame, segments, m);
                    scores.push_back(evaluate_extraction(points_mask(sel.points).cells, truth[i]));
                }
            } else if (o.pipeline == "density") {
                auto model = ScaleModel::for_spec(spec);
                double threshold = kDefaultDensityThreshold;
                ov.take("threshold", threshold);
                ov.take("d_v", model.d_v);
                ov.take("d_h", model.d_h);
                ov.finish();
                for (std::size_t i = 0; i < suite.size(); ++i)
                    scores.push_back(evaluate_extraction(scaled_density_extract(suite[i].cast.frame, model, threshold).cells, truth[i]));
            } else {
                double angle = 45.0, height = 0.45;
                ov.take("angle", angle);
                ov.take("height", height);
                ov.finish();
                for (std::size_t i = 0; i < suite.size(); ++i)
                    scores.push_back(
                        evaluate_extraction(extract_vertical_objects(suite[i].cast.frame, angle, height).mask.cells, truth[i]));
            }
            pooled = pool_scores(scores);
        } catch (const std::exception& e) {
            status = std::string("error: ") + e.what();
            std::replace(status.begin(), status.end(), ',', ';');
            pooled.precision = pooled.recall = std::numeric_limits<double>::quiet_NaN();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        for (const auto& [k, v] : cell) dst << v << ',';
        dst << format_sig6(pooled.precision) << ',' << format_sig6(pooled.recall);
        if (!o.no_runtime) dst << ',' << format_sig6(secs);
        dst << ',' << status << '\n';
    }
    return kOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Orchard robot perception, navigation and arm tools", "pergola"};
    app.require_subcommand(1);

    SimulateOpts sim;
    auto* c_sim = app.add_subcommand("simulate", "Run a path in a simulated orchard and dump frames");
    c_sim->add_option("--world", sim.world, "World config JSON")->check(CLI::ExistingFile);
    c_sim->add_option("--path", sim.path, "Path JSON; omit for a single frame at the start pose")->check(CLI::ExistingFile);
    c_sim->add_option("--script", sim.script, "Scenario script JSON of (duration, v, omega) / autonomous segments")
        ->check(CLI::ExistingFile);
    c_sim->add_option("--seed", sim.seed, "RNG seed (required)");
    c_sim->add_option("--out", sim.out, "Output directory")->required();
    c_sim->add_option("--x", sim.x, "Start x of the robot centre");
    c_sim->add_option("--y", sim.y, "Start y of the robot centre");
    c_sim->add_option("--heading", sim.heading, "Start heading (rad)");
    c_sim->add_option("--turn", sim.turn, "Default turn direction (left|right)");
    c_sim->add_option("--frame-every", sim.frame_every, "Write every n-th frame (0 = none)");
    c_sim->add_option("--set", sim.set, "key=value override (world or mission keys)");

    DetectRowOpts det;
    auto* c_det = app.add_subcommand("detect-row", "Estimate row offsets from a frame or a row mask");
    c_det->add_option("--frame", det.frame, "Frame CSV")->check(CLI::ExistingFile);
    c_det->add_option("--mask", det.mask, "Row mask PGM")->check(CLI::ExistingFile);
    c_det->add_option("--diagnostics", det.diagnostics, "Write pipeline counts as JSON");
    c_det->add_option("--set", det.set, "key=value detector override");

    ExtractOpts ext;
    auto* c_ext = app.add_subcommand("extract-features", "Extract a structure mask from a frame");
    c_ext->add_option("--method", ext.method, "plane|density|vertical")->required();
    c_ext->add_option("--frame", ext.frame, "Frame CSV")->required()->check(CLI::ExistingFile);
    c_ext->add_option("--out", ext.out, "Mask PGM")->required();
    c_ext->add_option("--grid-csv", ext.grid_csv, "Also write the lossless grid CSV");
    c_ext->add_option("--set", ext.set, "key=value method override");

    EvaluateOpts ev;
    auto* c_ev = app.add_subcommand("evaluate", "Score a predicted mask against a truth mask");
    c_ev->add_option("--pred", ev.pred, "Predicted mask PGM")->required()->check(CLI::ExistingFile);
    c_ev->add_option("--truth", ev.truth, "Truth mask PGM")->required()->check(CLI::ExistingFile);

    NavigateOpts nav;
    auto* c_nav = app.add_subcommand("navigate", "Closed-loop path execution");
    c_nav->add_option("--world", nav.world, "World config JSON")->check(CLI::ExistingFile);
    c_nav->add_option("--path", nav.path, "Path JSON (default: the reference row-end path)")->check(CLI::ExistingFile);
    c_nav->add_option("--seed", nav.seed, "RNG seed (required)");
    c_nav->add_option("--out", nav.out, "Trajectory CSV");
    c_nav->add_option("--x", nav.x, "Start x of the robot centre");
    c_nav->add_option("--y", nav.y, "Start y of the robot centre");
    c_nav->add_option("--heading", nav.heading, "Start heading (rad)");
    c_nav->add_option("--turn", nav.turn, "Default turn direction (left|right)");
    c_nav->add_option("--set", nav.set, "key=value override (world or mission keys)");

    SafetyOpts saf;
    auto* c_saf = app.add_subcommand("safety-monitor", "Replay frames through the vest detector");
    c_saf->add_option("--frames", saf.frames, "Frame CSVs in order")->required()->check(CLI::ExistingFile);
    c_saf->add_option("--zones", saf.zones, "Zones JSON {decelerate:{..}, stop:{..}}")->check(CLI::ExistingFile);
    c_saf->add_flag("--fill", saf.fill, "Fill zero-range reflector pixels first");
    c_saf->add_option("--set", saf.set, "key=value detector override");

    BoomOpts boom;
    auto* c_boom = app.add_subcommand("boom-nav", "Boom set-points from vertical scans, or combine disparities");
    c_boom->add_option("--scans", boom.scans, "CSV scan,odometry,y,z")->check(CLI::ExistingFile);
    c_boom->add_option("--out", boom.out, "Output CSV / matrix");
    c_boom->add_option("--disparity-a", boom.disparity_a, "First disparity (PGM or CSV)")->check(CLI::ExistingFile);
    c_boom->add_option("--disparity-b", boom.disparity_b, "Second disparity (PGM or CSV)")->check(CLI::ExistingFile);
    c_boom->add_option("--threshold", boom.threshold, "Disparity agreement threshold");
    c_boom->add_option("--set", boom.set, "key=value override");

    IkOpts ik;
    auto* c_ik = app.add_subcommand("ik", "Planar 3-link inverse kinematics and workspace export");
    c_ik->add_option("--target", ik.target, "x y of the end point")->expected(2);
    c_ik->add_option("--beta", ik.beta, "Last link angle (rad)");
    c_ik->add_option("--workspace", ik.workspace, "Write PREFIX.ppm and PREFIX.csv");
    c_ik->add_option("--set", ik.set, "key=value geometry / grid override");

    SweepOpts sw;
    auto* c_sw = app.add_subcommand("sweep", "Parameter grid over the extraction pipelines");
    c_sw->add_option("--pipeline", sw.pipeline, "plane|density|vertical")->required();
    c_sw->add_option("--grid", sw.grid, "key=v1,v2,...")->required();
    c_sw->add_option("--seed", sw.seed, "RNG seed (required)");
    c_sw->add_option("--frames", sw.frames, "Suite frames per cell");
    c_sw->add_option("--azimuths", sw.azimuths, "Lidar azimuth columns");
    c_sw->add_option("--truth", sw.truth, "structure|posts");
    c_sw->add_option("--out", sw.out, "Output CSV (default stdout)");
    c_sw->add_flag("--no-runtime", sw.no_runtime, "Omit the runtime column");

    std::vector<std::string> argv_s{"pergola"};
    argv_s.insert(argv_s.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_s) argv.push_back(s.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsageError;
    }

    try {
        if (c_sim->parsed()) return run_simulate(sim, err);
        if (c_det->parsed()) return run_detect_row(det, out);
        if (c_ext->parsed()) return run_extract(ext, out);
        if (c_ev->parsed()) return run_evaluate(ev, out);
        if (c_nav->parsed()) return run_navigate(nav, out, err);
        if (c_saf->parsed()) return run_safety(saf, out);
        if (c_boom->parsed()) return run_boom(boom, out);
        if (c_ik->parsed()) return run_ik(ik, out);
        if (c_sw->parsed()) return run_sweep(sw, out);
    } catch (const UsageError& e) {
        err << "pergola: " << e.what() << "\nRun with --help for usage.\n";
        return kUsageError;
    } catch (const std::exception& e) {
        err << "pergola: " << e.what() << '\n';
        return kDataError;
    }
    return kUsageError;
}

}  // namespace pergola::cli
