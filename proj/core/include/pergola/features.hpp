#pragma once

#include <string>
#include <vector>

#include "pergola/scan.hpp"

namespace pergola {

enum class PlaneMetric { mean, median, maximum };

PlaneMetric plane_metric_from_string(const std::string& s);
std::string to_string(PlaneMetric m);

struct PlaneSelection {
    int plane = 0;
    std::vector<Point3> points;
};

// ties go to the lower plane index; zero ranges are ignored
PlaneSelection select_plane(const LidarFrame& frame, PlaneMetric metric);

struct SegmentedSelection {
    std::vector<int> planes;  // per segment, -1 where the arc had no returns
    std::vector<Point3> points;
};

SegmentedSelection select_plane_segmented(const LidarFrame& frame, int n_segments, PlaneMetric metric);

struct ScaleModel {
    double delta_v_deg = 2.0;
    double delta_h_deg = 0.4;
    double d_v = 2.0;
    double d_h = 0.1;
    int max_planes = 16;
    int max_columns = 900;
    double p_max = 255.0;

    static ScaleModel for_spec(const LidarSpec& spec);
    void validate() const;
};

// expected planes / columns on the reference object at range r_o (continuous)
double planes_on_object(double r_o, const ScaleModel& model);
double columns_on_object(double r_o, const ScaleModel& model);
double density_scale_factor(double r_o, const ScaleModel& model);

// counts scaled by the factor at each cell-centre range, then thresholded (strictly greater)
BirdsEyeGrid scaled_density_extract(const LidarFrame& frame, const ScaleModel& model, double threshold,
                                    const GridSpec& grid = {});
// the scaled values before thresholding
BirdsEyeGrid scaled_density(const LidarFrame& frame, const ScaleModel& model, const GridSpec& grid = {});

// degrees in [0, 90]
double vertical_angle(double r1, double alpha1_deg, double r2, double alpha2_deg);

struct VerticalObject {
    std::vector<std::pair<int, int>> cells;  // (plane, azimuth)
    std::vector<Point3> points;
    double z_min = 0.0;
    double z_max = 0.0;
    double height() const noexcept { return z_max - z_min; }
};

struct VerticalObjects {
    std::vector<VerticalObject> objects;
    BirdsEyeGrid mask;
};

VerticalObjects extract_vertical_objects(const LidarFrame& frame, double angle_threshold_deg = 45.0,
                                         double height_threshold = 0.45, const GridSpec& grid = {});

struct ExtractionScores {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    double precision = 0.0;  // NaN where the denominator is zero
    double recall = 0.0;
    double specificity = 0.0;
};

ExtractionScores evaluate_extraction(const Matrix<double>& output, const Matrix<double>& truth);
// sums counts and recomputes the ratios
ExtractionScores pool_scores(const std::vector<ExtractionScores>& scores);

// binary mask of arbitrary points
BirdsEyeGrid points_mask(const std::vector<Point3>& points, const GridSpec& grid = {});

}  // namespace pergola
