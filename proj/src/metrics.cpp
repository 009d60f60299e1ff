#include "ldiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ldiff {

std::string to_string(Binning b) {
  switch (b) {
    case Binning::SphericalThetaPhi: return "spherical_theta_phi";
    case Binning::PowerTrace: return "power_trace";
    case Binning::Coordinate: return "coordinate";
  }
  return "?";
}

std::size_t HistogramSpec::total_bins() const {
  std::size_t n = 1;
  for (int b : bins) n *= static_cast<std::size_t>(b);
  return bins.empty() ? 0 : n;
}

namespace {

int bin_of(double v, double lo, double hi, int bins) {
  const int b = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
  return std::clamp(b, 0, bins - 1);
}

}  // namespace

Histogram spherical_histogram(const std::vector<Vec>& samples, int n_theta, int n_phi) {
  if (n_theta < 2 || n_phi < 2) throw std::invalid_argument("spherical_histogram: bin counts must be >= 2");
  constexpr double pi = std::numbers::pi;
  Histogram h;
  h.spec = {Binning::SphericalThetaPhi, {n_theta, n_phi}, {0.0, 0.0}, {pi, 2.0 * pi}};
  h.counts.assign(static_cast<std::size_t>(n_theta) * n_phi, 0.0);
  for (const auto& x : samples) {
    if (x.size() != 3) throw DimensionMismatch("spherical_histogram: samples must lie in R^3");
    const double r = x.norm();
    if (!(r > 0.0)) continue;
    const double theta = std::acos(std::clamp(x[2] / r, -1.0, 1.0));
    double phi = std::atan2(x[1], x[0]);
    if (phi < 0.0) phi += 2.0 * pi;
    const int i = bin_of(theta, 0.0, pi, n_theta);
    const int j = bin_of(phi, 0.0, 2.0 * pi, n_phi);
    h.counts[static_cast<std::size_t>(i) * n_phi + j] += 1.0;
  }
  return h;
}

Histogram histogram_1d(const std::vector<double>& values, int bins, double lo, double hi, Binning binning) {
  if (bins < 2) throw std::invalid_argument("histogram_1d: bin count must be >= 2");
  if (!(hi > lo)) throw std::invalid_argument("histogram_1d: empty range");
  Histogram h;
  h.spec = {binning, {bins}, {lo}, {hi}};
  h.counts.assign(bins, 0.0);
  for (double v : values) h.counts[bin_of(v, lo, hi, bins)] += 1.0;
  return h;
}

double jsd(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("jsd: histograms differ in size");
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) throw std::invalid_argument("jsd: negative bin mass");
    sp += p[i];
    sq += q[i];
  }
  if (!(sp > 0.0) || !(sq > 0.0)) throw std::invalid_argument("jsd: empty histogram");
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = p[i] / sp, b = q[i] / sq, m = 0.5 * (a + b);
    if (a > 0.0) js += 0.5 * a * std::log2(a / m);
    if (b > 0.0) js += 0.5 * b * std::log2(b / m);
  }
  return std::sqrt(std::clamp(js, 0.0, 1.0));
}

double jsd_histograms(const Histogram& P, const Histogram& Q) {
  if (!(P.spec == Q.spec)) throw std::invalid_argument("jsd_histograms: binning mismatch");
  return jsd(P.counts, Q.counts);
}

ViolationStats violation_stats(const ConstraintSet& cs, const std::vector<Vec>& samples) {
  ViolationStats s;
  if (samples.empty()) return s;
  for (const auto& x : samples) {
    if (cs.num_eq > 0) s.avg_abs_h += cs.h(x).lpNorm<1>() / cs.num_eq;
    if (cs.num_ineq > 0) s.avg_g_plus += cs.g(x).cwiseMax(0.0).sum() / cs.num_ineq;
  }
  s.avg_abs_h /= samples.size();
  s.avg_g_plus /= samples.size();
  return s;
}

std::vector<double> power_traces(const std::vector<Vec>& samples, int n, int k) {
  if (k < 0) throw std::invalid_argument("power_traces: negative power");
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& x : samples) {
    if (x.size() != static_cast<Eigen::Index>(n) * n) throw DimensionMismatch("power_traces: sample is not n x n");
    Eigen::Map<const Mat> S(x.data(), n, n);
    Mat P = Mat::Identity(n, n);
    for (int i = 0; i < k; ++i) P = P * S;
    out.push_back(P.trace());
  }
  return out;
}

namespace {

std::pair<double, double> observed_range(const std::vector<double>& v) {
  auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  double lo = *mn, hi = *mx;
  if (!(hi > lo)) {
    const double pad = std::max(1.0, std::abs(lo)) * 1e-6;
    lo -= pad;
    hi += pad;
  }
  return {lo, hi};
}

}  // namespace

std::vector<Histogram> power_trace_stats(const std::vector<Vec>& samples, int n, const std::vector<int>& powers,
                                         int bins) {
  std::vector<Histogram> out;
  if (samples.empty()) throw std::invalid_argument("power_trace_stats: no samples");
  for (int k : powers) {
    const auto tr = power_traces(samples, n, k);
    const auto [lo, hi] = observed_range(tr);
    out.push_back(histogram_1d(tr, bins, lo, hi, Binning::PowerTrace));
  }
  return out;
}

double power_trace_jsd(const std::vector<Vec>& a, const std::vector<Vec>& b, int n, int k, int bins) {
  if (a.empty() || b.empty()) throw std::invalid_argument("power_trace_jsd: no samples");
  auto ta = power_traces(a, n, k);
  const auto tb = power_traces(b, n, k);
  std::vector<double> all = ta;
  all.insert(all.end(), tb.begin(), tb.end());
  const auto [lo, hi] = observed_range(all);
  return jsd_histograms(histogram_1d(ta, bins, lo, hi, Binning::PowerTrace),
                        histogram_1d(tb, bins, lo, hi, Binning::PowerTrace));
}

}  // namespace ldiff
