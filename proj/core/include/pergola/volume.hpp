#pragma once

#include <span>

#include "pergola/scan.hpp"

namespace pergola {

// axis-aligned box in the lidar frame, closed on every face
struct VolumeOfInterest {
    double x_min = 0.0, x_max = 1.0;
    double y_min = -1.0, y_max = 1.0;
    double z_min = -1.0, z_max = 1.0;
    int count_threshold = 1;

    void validate() const;
    bool contains(const Point3& p) const noexcept {
        return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max && p.z >= z_min && p.z <= z_max;
    }
    // reflected across the x axis
    VolumeOfInterest mirrored() const noexcept {
        auto v = *this;
        v.y_min = -y_max;
        v.y_max = -y_min;
        return v;
    }
};

int count_in_volume(std::span<const Point3> points, const VolumeOfInterest& volume);
// true when at least count_threshold points lie inside
bool object_in_volume(std::span<const Point3> points, const VolumeOfInterest& volume);

}  // namespace pergola
