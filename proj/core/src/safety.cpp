#include "pergola/safety.hpp"

#include <algorithm>
#include <deque>
#include <limits>

namespace pergola {

namespace {

int wrap(int a, int n) { return ((a % n) + n) % n; }

}  // namespace

void VestParams::validate() const {
    if (intensity_threshold < 0 || intensity_threshold > 254) throw InvalidArgument("vest: intensity threshold out of range");
    if (dilation_iterations < 0) throw InvalidArgument("vest: dilation iterations must be >= 0");
    if (!(0.0 < band_low_pct && band_low_pct <= band_high_pct && band_high_pct <= 100.0))
        throw InvalidArgument("vest: band percentiles must satisfy 0 < low <= high <= 100");
    if (!(band_pick_pct > 0.0 && band_pick_pct <= 100.0)) throw InvalidArgument("vest: pick percentile must be in (0, 100]");
}

Matrix<std::uint8_t> dilate(const Matrix<std::uint8_t>& mask, int iterations) {
    const int np = static_cast<int>(mask.rows()), na = static_cast<int>(mask.cols());
    auto cur = mask;
    for (int it = 0; it < iterations; ++it) {
        auto next = cur;
        for (int p = 0; p < np; ++p)
            for (int a = 0; a < na; ++a) {
                if (!cur(static_cast<std::size_t>(p), static_cast<std::size_t>(a))) continue;
                for (int dp = -1; dp <= 1; ++dp) {
                    const int q = p + dp;
                    if (q < 0 || q >= np) continue;
                    for (int da = -1; da <= 1; ++da)
                        next(static_cast<std::size_t>(q), static_cast<std::size_t>(wrap(a + da, na))) = 1;
                }
            }
        cur = std::move(next);
    }
    return cur;
}

std::vector<VestDetection> detect_vests(const LidarFrame& frame, const VolumeOfInterest& decel_zone,
                                        const VolumeOfInterest& stop_zone, const VestParams& params) {
    params.validate();
    decel_zone.validate();
    stop_zone.validate();
    const int np = frame.planes(), na = frame.azimuths();
    auto at = [](int p, int a) { return std::pair{static_cast<std::size_t>(p), static_cast<std::size_t>(a)}; };

    Matrix<std::uint8_t> mask(frame.range.rows(), frame.range.cols(), 0);
    for (int p = 0; p < np; ++p)
        for (int a = 0; a < na; ++a) {
            const auto [i, j] = at(p, a);
            if (frame.intensity(i, j) > params.intensity_threshold) mask(i, j) = 1;
        }
    const auto grown = dilate(mask, params.dilation_iterations);

    // 8-connected blobs of the dilated mask, one detection each
    Matrix<int> label(frame.range.rows(), frame.range.cols(), -1);
    std::vector<VestDetection> out;
    for (int p0 = 0; p0 < np; ++p0)
        for (int a0 = 0; a0 < na; ++a0) {
            {
                const auto [i, j] = at(p0, a0);
                if (!grown(i, j) || label(i, j) >= 0) continue;
            }
            const int id = static_cast<int>(out.size());
            std::vector<Pixel> blob;
            std::deque<Pixel> queue{{p0, a0}};
            label(static_cast<std::size_t>(p0), static_cast<std::size_t>(a0)) = id;
            while (!queue.empty()) {
                const auto [p, a] = queue.front();
                queue.pop_front();
                blob.emplace_back(p, a);
                for (int dp = -1; dp <= 1; ++dp)
                    for (int da = -1; da <= 1; ++da) {
                        const int q = p + dp, b = wrap(a + da, na);
                        if (q < 0 || q >= np) continue;
                        const auto [i, j] = at(q, b);
                        if (!grown(i, j) || label(i, j) >= 0) continue;
                        label(i, j) = id;
                        queue.emplace_back(q, b);
                    }
            }
            VestDetection det;
            std::optional<Point3> nearest;
            double nearest_r = 0.0;
            std::vector<double> ranges;
            for (const auto& [p, a] : blob) {
                const auto [i, j] = at(p, a);
                const double r = frame.range(i, j);
                if (mask(i, j)) {
                    det.reflector_pixels.emplace_back(p, a);
                    if (r > 0.0 && (!nearest || r < nearest_r)) {
                        nearest = frame.point(p, a);
                        nearest_r = r;
                    }
                }
                if (r > 0.0) ranges.push_back(r);
            }
            std::sort(det.reflector_pixels.begin(), det.reflector_pixels.end());
            if (nearest) {
                det.position = *nearest;
            } else {
                if (ranges.empty()) continue;  // nothing to place the reflector with
                std::sort(ranges.begin(), ranges.end());
                const double lo = nearest_rank(ranges, params.band_low_pct);
                const double hi = nearest_rank(ranges, params.band_high_pct);
                std::vector<double> band;
                for (double r : ranges)
                    if (r >= lo && r <= hi) band.push_back(r);
                const double r = nearest_rank(band, params.band_pick_pct);
                const auto [p, a] = det.reflector_pixels[det.reflector_pixels.size() / 2];
                det.position = polar_to_cartesian(frame.spec.plane_angles_deg[static_cast<std::size_t>(p)],
                                                  frame.spec.azimuth_deg(a), r)
                                   .value();
            }
            det.decelerate = decel_zone.contains(det.position);
            det.stop = stop_zone.contains(det.position);
            out.push_back(std::move(det));
        }
    return out;
}

double guaranteed_detection_range(double w_s, double alpha_l_deg) {
    if (!(w_s >= 0.0)) throw InvalidArgument("strip width must be >= 0");
    if (!(alpha_l_deg > 0.0 && alpha_l_deg < 180.0)) throw InvalidArgument("angular resolution must be in (0, 180) degrees");
    return w_s / (2.0 * std::tan(0.5 * deg2rad(alpha_l_deg)));
}

LidarFrame fill_reflector_ranges(const LidarFrame& frame, int intensity_threshold) {
    auto out = frame;
    const int np = frame.planes(), na = frame.azimuths();
    for (int p = 0; p < np; ++p)
        for (int a = 0; a < na; ++a) {
            const auto i = static_cast<std::size_t>(p), j = static_cast<std::size_t>(a);
            if (frame.intensity(i, j) <= intensity_threshold || frame.range(i, j) != 0.0) continue;
            std::vector<double> nb;
            for (int dp = -1; dp <= 1; ++dp)
                for (int da = -1; da <= 1; ++da) {
                    const int q = p + dp;
                    if ((dp == 0 && da == 0) || q < 0 || q >= np) continue;
                    const double r = frame.range(static_cast<std::size_t>(q), static_cast<std::size_t>(wrap(a + da, na)));
                    if (r > 0.0) nb.push_back(r);
                }
            if (!nb.empty()) out.range(i, j) = median(std::move(nb));
        }
    return out;
}

std::vector<SegmentedObject> segment_by_range(const LidarFrame& frame, double max_range, double diff_threshold,
                                              double min_height) {
    if (!(max_range > 0.0 && diff_threshold > 0.0 && min_height >= 0.0))
        throw InvalidArgument("segment_by_range: thresholds must be positive");
    const int np = frame.planes(), na = frame.azimuths();
    auto range = frame.range;
    for (auto& r : range.data())
        if (r > max_range) r = 0.0;
    auto rng = [&](int p, int a) { return range(static_cast<std::size_t>(p), static_cast<std::size_t>(a)); };
    Matrix<std::uint8_t> claimed(range.rows(), range.cols(), 0);
    std::vector<SegmentedObject> out;
    for (int p0 = 0; p0 < np; ++p0)
        for (int a0 = 0; a0 < na; ++a0) {
            if (rng(p0, a0) == 0.0 || claimed(static_cast<std::size_t>(p0), static_cast<std::size_t>(a0))) continue;
            SegmentedObject obj;
            std::vector<double> member_ranges;
            std::deque<Pixel> queue{{p0, a0}};
            claimed(static_cast<std::size_t>(p0), static_cast<std::size_t>(a0)) = 1;
            obj.z_min = std::numeric_limits<double>::infinity();
            obj.z_max = -std::numeric_limits<double>::infinity();
            while (!queue.empty()) {
                const auto [p, a] = queue.front();
                queue.pop_front();
                obj.pixels.emplace_back(p, a);
                const double r = rng(p, a);
                member_ranges.push_back(r);
                const auto q = polar_to_cartesian(frame.spec.plane_angles_deg[static_cast<std::size_t>(p)],
                                                  frame.spec.azimuth_deg(a), r)
                                   .value();
                obj.z_min = std::min(obj.z_min, q.z);
                obj.z_max = std::max(obj.z_max, q.z);
                for (int dp : {-1, 1}) {
                    const int pp = p + dp;
                    if (pp < 0 || pp >= np) continue;
                    for (int da = -1; da <= 1; ++da) {
                        const int aa = wrap(a + da, na);
                        const auto ci = static_cast<std::size_t>(pp), cj = static_cast<std::size_t>(aa);
                        const double rr = rng(pp, aa);
                        if (rr == 0.0 || claimed(ci, cj) || std::abs(rr - r) >= diff_threshold) continue;
                        claimed(ci, cj) = 1;
                        queue.emplace_back(pp, aa);
                    }
                }
            }
            if (obj.height() < min_height) continue;
            std::sort(obj.pixels.begin(), obj.pixels.end());
            obj.range = median(std::move(member_ranges));
            out.push_back(std::move(obj));
        }
    return out;
}

double missed_object_width(double v_a, double t_l, double d_l) {
    if (!(v_a >= 0.0 && t_l >= 0.0 && d_l >= 0.0)) throw InvalidArgument("missed_object_width: inputs must be >= 0");
    return std::max(0.0, v_a * t_l - d_l);
}

}  // namespace pergola
