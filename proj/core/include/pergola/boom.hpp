#pragma once

#include <optional>
#include <span>
#include <vector>

#include "pergola/common.hpp"

namespace pergola {

struct ScanPointYZ {
    double y;
    double z;
};

// keeps |y| <= half_width and z > z_floor
std::vector<ScanPointYZ> boom_roi(std::span<const ScanPointYZ> scan, double half_width, double z_floor);

// nearest-rank percentile of z minus offset; nullopt means no canopy
std::optional<double> scan_target(std::span<const ScanPointYZ> roi, double percentile, double offset);

enum class BoomMode { minimum, median };

struct BoomTarget {
    double position;  // metres ahead of the boom plane
    double height;
};

struct BoomConfig {
    double sensor_to_boom = 1.0;  // sensor ahead of the boom plane
    double min_height = 0.5;      // boom floor, used when nothing is collated
    BoomMode mode = BoomMode::minimum;

    void validate() const;
};

class BoomController {
  public:
    explicit BoomController(BoomConfig cfg = {});

    // advance > 0 moves targets toward the boom; a target passing position 0 is deleted
    double update(double advance, std::optional<double> new_target);
    // external solid-branch height forces minimum mode with that height included
    double update(double advance, std::optional<double> new_target, std::optional<double> solid_branch_height);

    const std::vector<BoomTarget>& targets() const noexcept { return targets_; }
    const BoomConfig& config() const noexcept { return cfg_; }
    double set_point() const;

  private:
    double set_point(BoomMode mode) const;

    BoomConfig cfg_;
    std::vector<BoomTarget> targets_;  // sorted by position
};

// pixels disagreeing by more than the threshold become 0, the rest the mean
Matrix<double> combine_disparities(const Matrix<double>& d1, const Matrix<double>& d2, double diff_threshold);

}  // namespace pergola
