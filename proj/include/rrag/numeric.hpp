#pragma once

#include <cstddef>

namespace rrag {

// Compensated summation; keeps reductions order-insensitive to ~1e-9.
class KahanSum {
public:
    void add(double x) {
        double y = x - compensation_;
        double t = sum_ + y;
        compensation_ = (t - sum_) - y;
        sum_ = t;
        ++count_;
    }

    double sum() const { return sum_; }
    size_t count() const { return count_; }
    double mean() const { return count_ == 0 ? 0.0 : sum_ / static_cast<double>(count_); }

private:
    double sum_ = 0.0;
    double compensation_ = 0.0;
    size_t count_ = 0;
};

} // namespace rrag
