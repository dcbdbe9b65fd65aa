#include "pergola/boom.hpp"

#include <algorithm>

namespace pergola {

std::vector<ScanPointYZ> boom_roi(std::span<const ScanPointYZ> scan, double half_width, double z_floor) {
    if (!(half_width > 0.0)) throw InvalidArgument("boom_roi: half width must be > 0");
    std::vector<ScanPointYZ> out;
    for (const auto& p : scan)
        if (std::abs(p.y) <= half_width && p.z > z_floor) out.push_back(p);
    return out;
}

std::optional<double> scan_target(std::span<const ScanPointYZ> roi, double percentile, double offset) {
    if (!(percentile > 0.0 && percentile <= 100.0)) throw InvalidArgument("scan_target: percentile must be in (0, 100]");
    if (roi.empty()) return std::nullopt;
    std::vector<double> z;
    z.reserve(roi.size());
    for (const auto& p : roi) z.push_back(p.z);
    std::sort(z.begin(), z.end());
    return nearest_rank(z, percentile) - offset;
}

void BoomConfig::validate() const {
    if (!(sensor_to_boom >= 0.0)) throw InvalidArgument("boom: sensor_to_boom must be >= 0");
    if (!std::isfinite(min_height)) throw InvalidArgument("boom: min_height must be finite");
}

BoomController::BoomController(BoomConfig cfg) : cfg_(cfg) { cfg_.validate(); }

double BoomController::update(double advance, std::optional<double> new_target) {
    return update(advance, new_target, std::nullopt);
}

double BoomController::update(double advance, std::optional<double> new_target, std::optional<double> solid) {
    if (!(advance >= 0.0)) throw InvalidArgument("boom: odometry must not run backwards");
    for (auto& t : targets_) t.position -= advance;
    std::erase_if(targets_, [](const BoomTarget& t) { return t.position < -1e-9; });
    if (new_target) targets_.push_back({cfg_.sensor_to_boom, *new_target});
    if (solid) {
        targets_.push_back({cfg_.sensor_to_boom, *solid});
    }
    std::stable_sort(targets_.begin(), targets_.end(),
                     [](const BoomTarget& a, const BoomTarget& b) { return a.position < b.position; });
    return set_point(solid ? BoomMode::minimum : cfg_.mode);
}

double BoomController::set_point() const { return set_point(cfg_.mode); }

double BoomController::set_point(BoomMode mode) const {
    if (targets_.empty()) return cfg_.min_height;
    std::vector<double> h;
    for (const auto& t : targets_) h.push_back(t.height);
    std::sort(h.begin(), h.end());
    const double v = mode == BoomMode::minimum ? h.front() : nearest_rank(h, 50.0);
    return std::max(v, cfg_.min_height);
}

Matrix<double> combine_disparities(const Matrix<double>& d1, const Matrix<double>& d2, double diff_threshold) {
    if (!d1.same_shape(d2)) throw InvalidArgument("combine_disparities: shapes differ");
    if (!(diff_threshold >= 0.0)) throw InvalidArgument("combine_disparities: threshold must be >= 0");
    Matrix<double> out(d1.rows(), d1.cols());
    for (std::size_t i = 0; i < d1.size(); ++i) {
        const double a = d1.data()[i], b = d2.data()[i];
        out.data()[i] = std::abs(a - b) > diff_threshold ? 0.0 : 0.5 * (a + b);
    }
    return out;
}

}  // namespace pergola
