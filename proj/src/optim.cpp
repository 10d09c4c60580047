#include "cct/optim.hpp"

#include <cmath>

#include "cct/errors.hpp"

namespace cct {

void ScheduleConfig::validate() const {
    if (warmup_fraction < 0.0 || warmup_fraction >= 1.0) {
        throw ConfigError("schedule: warmup_fraction must be in [0, 1)");
    }
    if (min_lr > base_lr) throw ConfigError("schedule: min_lr must not exceed base_lr");
    if (total_steps == 0) throw ConfigError("schedule: total_steps must be >= 1");
}

double lr_at(const ScheduleConfig& s, std::size_t step) {
    const auto warmup = static_cast<std::size_t>(
        std::llround(s.warmup_fraction * static_cast<double>(s.total_steps)));
    if (warmup > 0 && step <= warmup) {
        return s.base_lr * static_cast<double>(step) / static_cast<double>(warmup);
    }
    if (s.total_steps <= warmup) return s.base_lr;
    const double phase = static_cast<double>(step - warmup) /
                         static_cast<double>(s.total_steps - warmup);
    return s.min_lr + 0.5 * (s.base_lr - s.min_lr) *
                          (1.0 + std::cos(3.14159265358979323846 * phase));
}

void adamw_update(std::span<double> param, std::span<const double> grad, Moments& moments,
                  double lr, double weight_decay, const ScheduleConfig& hyper,
                  std::size_t step) {
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < param.size(); ++i) {
        param[i] -= lr * weight_decay * param[i];
        moments.m[i] = hyper.beta1 * moments.m[i] + (1.0 - hyper.beta1) * grad[i];
        moments.v[i] = hyper.beta2 * moments.v[i] + (1.0 - hyper.beta2) * grad[i] * grad[i];
        const double m_hat = moments.m[i] / bc1;
        const double v_hat = moments.v[i] / bc2;
        param[i] -= lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
}

}  // namespace cct
