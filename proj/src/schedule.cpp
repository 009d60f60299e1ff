#include "ldiff/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ldiff {

NoiseSchedule::NoiseSchedule(double sigma_min, double sigma_max, double T, int N)
    : sigma_min_(sigma_min), sigma_max_(sigma_max), T_(T), N_(N), dt_(N > 0 ? T / N : 0.0) {
  if (!(sigma_min >= 0.0) || !(sigma_max > 0.0)) throw std::invalid_argument("schedule: sigma_min must be >= 0 and sigma_max > 0");
  if (sigma_min > sigma_max) throw std::invalid_argument("schedule: sigma_min > sigma_max");
  if (!(T > 0.0)) throw std::invalid_argument("schedule: T must be positive");
  if (N < 0) throw std::invalid_argument("schedule: N must be nonnegative");
}

double NoiseSchedule::sigma_at(int k) const {
  if (k < 0 || k > N_) throw std::out_of_range("schedule: step index " + std::to_string(k) + " outside [0, N]");
  if (N_ == 0) return sigma_min_;
  return sigma_min_ + (static_cast<double>(k) / N_) * (sigma_max_ - sigma_min_);
}

double NoiseSchedule::sigma_clamped(int k) const { return sigma_at(std::clamp(k, 0, N_)); }

double NoiseSchedule::sigma(double t) const {
  if (t < 0.0 || t > T_ * (1.0 + 1e-12)) throw std::out_of_range("schedule: time outside [0, T]");
  return sigma_min_ + (t / T_) * (sigma_max_ - sigma_min_);
}

double NoiseSchedule::cumulative_S(double t) const {
  if (t < 0.0 || t > T_ * (1.0 + 1e-12)) throw std::out_of_range("schedule: time outside [0, T]");
  const double a = sigma_min_;
  const double b = (sigma_max_ - sigma_min_) / T_;
  return a * a * t + a * b * t * t + b * b * t * t * t / 3.0;
}

double NoiseSchedule::inverse_S(double level) const {
  if (level <= 0.0) return 0.0;
  const double a = sigma_min_;
  const double b = (sigma_max_ - sigma_min_) / T_;
  if (b == 0.0) return level / (a * a);
  // S(t) = ((a + b t)^3 - a^3) / (3 b)
  return (std::cbrt(3.0 * b * level + a * a * a) - a) / b;
}

double friction_factor(double gamma, double sigma_k, double dt) { return std::exp(-gamma * sigma_k * sigma_k * dt); }

}  // namespace ldiff
