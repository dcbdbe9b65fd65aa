#include "pergola/common.hpp"

#include <algorithm>

namespace pergola {

double median(std::vector<double> values) {
    if (values.empty()) throw InvalidArgument("median of empty sample");
    const auto n = values.size();
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(values.begin(), mid, values.end());
    const double hi = *mid;
    if (n % 2 == 1) return hi;
    const double lo = *std::max_element(values.begin(), mid);
    return 0.5 * (lo + hi);
}

}  // namespace pergola
