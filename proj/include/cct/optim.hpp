#pragma once

#include <cstddef>
#include <span>

#include "cct/linalg.hpp"

namespace cct {

struct ScheduleConfig {
    double base_lr = 5e-4;
    double min_lr = 1e-5;
    double warmup_fraction = 0.04;
    std::size_t total_steps = 5000;
    double weight_decay_proj = 1.0;
    double weight_decay_other = 0.2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

// Learning rate for update number `step` (1-based: the first update uses
// step 1, the last uses total_steps). Linear warmup to base_lr over
// round(warmup_fraction * total_steps) updates, then cosine decay to min_lr.
double lr_at(const ScheduleConfig& schedule, std::size_t step);

// First/second moment accumulators for one tensor.
struct Moments {
    Vector m;
    Vector v;

    explicit Moments(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Decoupled weight decay (param *= 1 - lr*wd, applied before the moment
// update) followed by a bias-corrected Adam step. `step` is the shared
// 1-based update counter.
void adamw_update(std::span<double> param, std::span<const double> grad, Moments& moments,
                  double lr, double weight_decay, const ScheduleConfig& hyper, std::size_t step);

}  // namespace cct
