#include "pergola/volume.hpp"

#include <algorithm>

namespace pergola {

void VolumeOfInterest::validate() const {
    if (!(x_min < x_max && y_min < y_max && z_min < z_max))
        throw InvalidArgument("volume of interest: min must be below max on every axis");
    if (count_threshold < 1) throw InvalidArgument("volume of interest: count threshold must be >= 1");
}

int count_in_volume(std::span<const Point3> points, const VolumeOfInterest& volume) {
    volume.validate();
    return static_cast<int>(std::count_if(points.begin(), points.end(), [&](const Point3& p) { return volume.contains(p); }));
}

bool object_in_volume(std::span<const Point3> points, const VolumeOfInterest& volume) {
    return count_in_volume(points, volume) >= volume.count_threshold;
}

}  // namespace pergola
