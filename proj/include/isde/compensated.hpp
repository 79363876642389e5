#pragma once

#include <cmath>

#include "isde/geometry.hpp"

namespace isde {

// Kahan-Babuska-Neumaier accumulator. The running compensation is folded in
// only when the value is read.
class NeumaierSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

class NeumaierSum2 {
 public:
  void add(Vec2 v) {
    x_.add(v.x);
    y_.add(v.y);
  }
  Vec2 value() const { return {x_.value(), y_.value()}; }

 private:
  NeumaierSum x_;
  NeumaierSum y_;
};

}  // namespace isde
