#pragma once

#include "ldiff/sampler.hpp"
#include "ldiff/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ldiff {

enum class Activation : std::uint32_t { Tanh = 0, SiLU = 1 };
enum class Conditioning : std::uint32_t { Step = 0, Sigma = 1 };

std::string to_string(Activation a);
std::string to_string(Conditioning c);
Activation activation_from_string(const std::string& s);
Conditioning conditioning_from_string(const std::string& s);

struct ScoreNetConfig {
  int dim = 3;
  bool underdamped = false;
  std::vector<int> hidden{64, 64};
  Activation activation = Activation::Tanh;
  Conditioning conditioning = Conditioning::Step;
  int embed_width = 32;  // even
  // Normalisation of the conditioning variable: u = k / N, or sigma_k / sigma_max.
  int N = 1;
  double sigma_min = 0.0;
  double sigma_max = 1.0;

  void validate() const;
};

/// Fully connected network s(x[, p~], emb(k)) -> R^d with a zero-initialised
/// output layer. Parameters are one flat vector, layer by layer, each layer
/// stored as W (out x in, column-major) followed by b.
class ScoreNet final : public ScoreModel {
 public:
  explicit ScoreNet(ScoreNetConfig cfg);
  ScoreNet(ScoreNetConfig cfg, Rng& rng);  // variance-scaled hidden weights

  const ScoreNetConfig& config() const { return cfg_; }
  int dim() const override { return cfg_.dim; }
  bool underdamped() const override { return cfg_.underdamped; }
  int input_width() const { return cfg_.dim * (cfg_.underdamped ? 2 : 1) + cfg_.embed_width; }
  const std::vector<int>& widths() const { return widths_; }

  Vec& params() { return theta_; }
  const Vec& params() const { return theta_; }
  Eigen::Index num_params() const { return theta_.size(); }

  /// Sinusoidal features of the normalised step, frequencies geometric in [1, 1000].
  Vec embedding(int k) const;

  Vec eval(int k, const Vec& x, const Vec* p = nullptr) const;
  Mat eval_batch(int k, const Mat& X, const Mat* P) const override;
  /// Column i is evaluated at step steps[i].
  Mat eval_batch(const std::vector<int>& steps, const Mat& X, const Mat* P) const;

  /// Sum over columns of d<upstream_i, s(query_i)>/d theta. Optionally returns
  /// the input gradients (d x n blocks for x and p~).
  Vec grad_params(const std::vector<int>& steps, const Mat& X, const Mat* P, const Mat& upstream,
                  Mat* grad_x = nullptr, Mat* grad_p = nullptr) const;
  Vec grad_params(int k, const Vec& x, const Vec* p, const Vec& upstream) const;

 private:
  Mat inputs(const std::vector<int>& steps, const Mat& X, const Mat* P) const;
  void check_query(const Mat& X, const Mat* P) const;

  ScoreNetConfig cfg_;
  std::vector<int> widths_;        // input, hidden..., output
  std::vector<Eigen::Index> offs_;  // start of each layer's W in theta_
  Vec theta_;
  Vec freqs_;
};

/// Header {"LDNET01\0", u32 underdamped, u32 conditioning, u32 activation,
/// u32 embed_width, u32 N, f64 sigma_min, f64 sigma_max, u32 n_widths,
/// u32 widths[], u64 n_params} then n_params little-endian float64.
void write_checkpoint(std::ostream& os, const ScoreNet& net);
ScoreNet read_checkpoint(std::istream& is);
void save_checkpoint(const std::string& path, const ScoreNet& net);
ScoreNet load_checkpoint(const std::string& path);

}  // namespace ldiff
