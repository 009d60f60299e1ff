#pragma once

#include <stdexcept>

namespace ldiff {

/// Linear noise schedule sigma(t) = sigma_min + (t / T)(sigma_max - sigma_min)
/// on the grid t_k = k dt, dt = T / N.
class NoiseSchedule {
 public:
  NoiseSchedule(double sigma_min, double sigma_max, double T, int N);

  double sigma_min() const { return sigma_min_; }
  double sigma_max() const { return sigma_max_; }
  double T() const { return T_; }
  int N() const { return N_; }
  double dt() const { return dt_; }

  /// sigma_k for 0 <= k <= N; throws std::out_of_range otherwise.
  double sigma_at(int k) const;
  /// sigma_k with k clamped into [0, N]. Chain ends use sigma_{-1} := sigma_0
  /// and sigma_{N+1} := sigma_N.
  double sigma_clamped(int k) const;
  /// sigma(t), 0 <= t <= T.
  double sigma(double t) const;
  /// S(t) = int_0^t sigma(s)^2 ds, exact.
  double cumulative_S(double t) const;
  /// Smallest t with S(t) >= level (may exceed T; the schedule is extrapolated linearly).
  double inverse_S(double level) const;

 private:
  double sigma_min_, sigma_max_, T_;
  int N_;
  double dt_;
};

/// a_k = exp(-gamma sigma_k^2 dt).
double friction_factor(double gamma, double sigma_k, double dt);

}  // namespace ldiff
