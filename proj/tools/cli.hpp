#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace pergola::cli {

inline constexpr int kOk = 0;
inline constexpr int kUsageError = 1;
inline constexpr int kDataError = 2;

// bad flags, unknown --set keys, missing seed
class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// args excludes the program name
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pergola::cli
