#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sdfit {

/// Thrown when a computation produces or receives non-finite values,
/// diverges, or otherwise fails numerically (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Compensated (Kahan) accumulator. Keeps permutation drift of batch
/// reductions below ~2*eps*sum|x|.
class KahanSum {
 public:
  void add(double x) {
    const double y = x - comp_;
    const double t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace sdfit
