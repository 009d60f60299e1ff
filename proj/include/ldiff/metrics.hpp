#pragma once

#include "ldiff/geometry.hpp"

#include <string>
#include <vector>

namespace ldiff {

enum class Binning { SphericalThetaPhi, PowerTrace, Coordinate };

std::string to_string(Binning b);

struct HistogramSpec {
  Binning binning = Binning::Coordinate;
  std::vector<int> bins;  // one entry per axis, each >= 2
  std::vector<double> lo, hi;

  bool operator==(const HistogramSpec&) const = default;
  std::size_t total_bins() const;
};

struct Histogram {
  HistogramSpec spec;
  std::vector<double> counts;  // row-major over the axes
};

/// (theta, phi) histogram of points in R^3, theta = polar angle in [0, pi],
/// phi = azimuth in [0, 2 pi). Points are normalised before binning.
Histogram spherical_histogram(const std::vector<Vec>& samples, int n_theta = 20, int n_phi = 40);

/// Equal-width histogram on [lo, hi]; values outside are clamped to the edge bins.
Histogram histogram_1d(const std::vector<double>& values, int bins, double lo, double hi,
                       Binning binning = Binning::Coordinate);

/// sqrt of the base-2 Jensen-Shannon divergence between the normalised
/// histograms. Throws std::invalid_argument on differing binning.
double jsd_histograms(const Histogram& P, const Histogram& Q);
double jsd(const std::vector<double>& p, const std::vector<double>& q);

struct ViolationStats {
  double avg_abs_h = 0.0;   // mean over samples of |h(x)|_1 / m
  double avg_g_plus = 0.0;  // mean over samples of sum_j max(g_j, 0) / l
};

ViolationStats violation_stats(const ConstraintSet& cs, const std::vector<Vec>& samples);

/// tr(S^k) for every sample, S the n x n matrix with column-major vec x.
std::vector<double> power_traces(const std::vector<Vec>& samples, int n, int k);

/// One histogram of tr(S^k) per requested power, over the observed range.
std::vector<Histogram> power_trace_stats(const std::vector<Vec>& samples, int n, const std::vector<int>& powers,
                                         int bins = 64);

/// JSD between power-trace histograms of two sample sets on a shared range.
double power_trace_jsd(const std::vector<Vec>& a, const std::vector<Vec>& b, int n, int k, int bins = 64);

}  // namespace ldiff
