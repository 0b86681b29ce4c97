#pragma once

#include <stdexcept>
#include <string>

namespace iid {

// Bad command-line usage (exit code 1).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Missing or malformed input data (exit code 2).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values encountered during optimization (exit code 3).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Weight-file problems keep a machine-readable kind so callers can
// distinguish a corrupt header from a short read or a config mismatch.
class WeightsError : public std::runtime_error {
  public:
    enum class Kind { bad_magic, bad_version, truncated, bad_shape, io };

    WeightsError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

  private:
    Kind kind_;
};

}  // namespace iid
