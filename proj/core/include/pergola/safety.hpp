#pragma once

#include <utility>
#include <vector>

#include "pergola/scan.hpp"
#include "pergola/volume.hpp"

namespace pergola {

using Pixel = std::pair<int, int>;  // (plane, azimuth)

struct VestParams {
    int intensity_threshold = 100;  // reflector when strictly above
    int dilation_iterations = 2;
    double band_low_pct = 25.0;
    double band_high_pct = 75.0;
    double band_pick_pct = 50.0;

    void validate() const;
};

struct VestDetection {
    std::vector<Pixel> reflector_pixels;
    Point3 position;
    bool decelerate = false;
    bool stop = false;
};

std::vector<VestDetection> detect_vests(const LidarFrame& frame, const VolumeOfInterest& decel_zone,
                                        const VolumeOfInterest& stop_zone, const VestParams& params = {});

// 3x3 dilation with azimuth wrap-around
Matrix<std::uint8_t> dilate(const Matrix<std::uint8_t>& mask, int iterations);

// once set, stays set until reset()
class StopLatch {
  public:
    void update(bool stop) noexcept { latched_ = latched_ || stop; }
    bool stopped() const noexcept { return latched_; }
    void reset() noexcept { latched_ = false; }

  private:
    bool latched_ = false;
};

// metres; alpha_l_deg is the horizontal angular resolution
double guaranteed_detection_range(double w_s, double alpha_l_deg);

// zero-range reflector pixels take the median of non-zero 3x3 neighbours
LidarFrame fill_reflector_ranges(const LidarFrame& frame, int intensity_threshold = 100);

struct SegmentedObject {
    std::vector<Pixel> pixels;
    double z_min = 0.0;
    double z_max = 0.0;
    double range = 0.0;  // median member range
    std::size_t size() const noexcept { return pixels.size(); }
    double height() const noexcept { return z_max - z_min; }
};

// flood fill over the three pixels above and three below
std::vector<SegmentedObject> segment_by_range(const LidarFrame& frame, double max_range = 10.0,
                                              double diff_threshold = 0.3, double min_height = 0.5);

// width of an object that can pass between two vertical scans
double missed_object_width(double v_a, double t_l, double d_l);

}  // namespace pergola
