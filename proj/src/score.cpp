#include "ldiff/score.hpp"

#include "ldiff/random.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace ldiff {

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "silu"; }
std::string to_string(Conditioning c) { return c == Conditioning::Step ? "step" : "sigma"; }

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "silu") return Activation::SiLU;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

Conditioning conditioning_from_string(const std::string& s) {
  if (s == "step") return Conditioning::Step;
  if (s == "sigma") return Conditioning::Sigma;
  throw std::invalid_argument("unknown conditioning '" + s + "'");
}

void ScoreNetConfig::validate() const {
  if (dim < 1) throw std::invalid_argument("score net: dim must be positive");
  if (embed_width < 2 || embed_width % 2 != 0) throw std::invalid_argument("score net: embed_width must be even and >= 2");
  for (int w : hidden)
    if (w < 1) throw std::invalid_argument("score net: hidden widths must be positive");
  if (N < 1) throw std::invalid_argument("score net: N must be positive");
  if (conditioning == Conditioning::Sigma && !(sigma_max > 0.0))
    throw std::invalid_argument("score net: sigma conditioning needs sigma_max > 0");
}

ScoreNet::ScoreNet(ScoreNetConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  widths_.push_back(input_width());
  for (int w : cfg_.hidden) widths_.push_back(w);
  widths_.push_back(cfg_.dim);
  Eigen::Index total = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offs_.push_back(total);
    total += static_cast<Eigen::Index>(widths_[l + 1]) * widths_[l] + widths_[l + 1];
  }
  theta_ = Vec::Zero(total);
  const int half = cfg_.embed_width / 2;
  freqs_.resize(half);
  for (int j = 0; j < half; ++j) freqs_[j] = half == 1 ? 1.0 : std::pow(1000.0, static_cast<double>(j) / (half - 1));
}

ScoreNet::ScoreNet(ScoreNetConfig cfg, Rng& rng) : ScoreNet(std::move(cfg)) {
  std::normal_distribution<double> n01(0.0, 1.0);
  const std::size_t layers = widths_.size() - 1;
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
    const Eigen::Index nw = static_cast<Eigen::Index>(widths_[l + 1]) * widths_[l];
    for (Eigen::Index i = 0; i < nw; ++i) theta_[offs_[l] + i] = scale * n01(rng);
  }
}

Vec ScoreNet::embedding(int k) const {
  const double u = cfg_.conditioning == Conditioning::Step
                       ? static_cast<double>(k) / cfg_.N
                       : (cfg_.sigma_min + (static_cast<double>(k) / cfg_.N) * (cfg_.sigma_max - cfg_.sigma_min)) /
                             cfg_.sigma_max;
  const Eigen::Index half = freqs_.size();
  Vec e(2 * half);
  for (Eigen::Index j = 0; j < half; ++j) {
    e[j] = std::sin(freqs_[j] * u);
    e[half + j] = std::cos(freqs_[j] * u);
  }
  return e;
}

void ScoreNet::check_query(const Mat& X, const Mat* P) const {
  if (X.rows() != cfg_.dim) throw DimensionMismatch("score net: x has wrong dimension");
  if (cfg_.underdamped) {
    if (P == nullptr) throw DimensionMismatch("score net: underdamped model needs p~");
    if (P->rows() != cfg_.dim || P->cols() != X.cols()) throw DimensionMismatch("score net: p~ has wrong shape");
  } else if (P != nullptr && P->size() != 0) {
    throw DimensionMismatch("score net: overdamped model takes no p~");
  }
}

Mat ScoreNet::inputs(const std::vector<int>& steps, const Mat& X, const Mat* P) const {
  check_query(X, P);
  if (static_cast<Eigen::Index>(steps.size()) != X.cols()) throw DimensionMismatch("score net: one step per column");
  const int d = cfg_.dim;
  Mat Z(input_width(), X.cols());
  Z.topRows(d) = X;
  if (cfg_.underdamped) Z.middleRows(d, d) = *P;
  for (Eigen::Index i = 0; i < X.cols(); ++i) Z.col(i).tail(cfg_.embed_width) = embedding(steps[i]);
  return Z;
}

namespace {

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

void activate(Activation act, const Mat& A, Mat& H) {
  if (act == Activation::Tanh) {
    H = A.array().tanh();
  } else {
    H = A.unaryExpr([](double a) { return a * sigmoid(a); });
  }
}

Mat activation_derivative(Activation act, const Mat& A, const Mat& H) {
  if (act == Activation::Tanh) return (1.0 - H.array().square()).matrix();
  return A.unaryExpr([](double a) {
    const double s = sigmoid(a);
    return s * (1.0 + a * (1.0 - s));
  });
}

}  // namespace

Mat ScoreNet::eval_batch(const std::vector<int>& steps, const Mat& X, const Mat* P) const {
  Mat H = inputs(steps, X, P);
  const std::size_t layers = widths_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = widths_[l], out = widths_[l + 1];
    Eigen::Map<const Mat> W(theta_.data() + offs_[l], out, in);
    Eigen::Map<const Vec> b(theta_.data() + offs_[l] + static_cast<Eigen::Index>(out) * in, out);
    Mat A = W * H;
    A.colwise() += b;
    if (l + 1 < layers) {
      activate(cfg_.activation, A, H);
    } else {
      H = std::move(A);
    }
  }
  return H;
}

Mat ScoreNet::eval_batch(int k, const Mat& X, const Mat* P) const {
  return eval_batch(std::vector<int>(X.cols(), k), X, P);
}

Vec ScoreNet::eval(int k, const Vec& x, const Vec* p) const {
  const Mat X = x;
  if (p != nullptr) {
    const Mat Pm = *p;
    return eval_batch(k, X, &Pm).col(0);
  }
  return eval_batch(k, X, nullptr).col(0);
}

Vec ScoreNet::grad_params(const std::vector<int>& steps, const Mat& X, const Mat* P, const Mat& upstream,
                          Mat* grad_x, Mat* grad_p) const {
  if (upstream.rows() != cfg_.dim || upstream.cols() != X.cols())
    throw DimensionMismatch("score net: upstream has wrong shape");
  const std::size_t layers = widths_.size() - 1;
  std::vector<Mat> acts(layers + 1), pre(layers);
  acts[0] = inputs(steps, X, P);
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = widths_[l], out = widths_[l + 1];
    Eigen::Map<const Mat> W(theta_.data() + offs_[l], out, in);
    Eigen::Map<const Vec> b(theta_.data() + offs_[l] + static_cast<Eigen::Index>(out) * in, out);
    pre[l] = W * acts[l];
    pre[l].colwise() += b;
    if (l + 1 < layers) {
      activate(cfg_.activation, pre[l], acts[l + 1]);
    } else {
      acts[l + 1] = pre[l];
    }
  }

  Vec grad = Vec::Zero(theta_.size());
  Mat delta = upstream;  // dL/d pre[l]
  for (std::size_t l = layers; l-- > 0;) {
    const int in = widths_[l], out = widths_[l + 1];
    if (l + 1 < layers) delta = delta.cwiseProduct(activation_derivative(cfg_.activation, pre[l], acts[l + 1]));
    Eigen::Map<Mat> gW(grad.data() + offs_[l], out, in);
    Eigen::Map<Vec> gb(grad.data() + offs_[l] + static_cast<Eigen::Index>(out) * in, out);
    gW.noalias() = delta * acts[l].transpose();
    gb = delta.rowwise().sum();
    if (l > 0 || grad_x != nullptr || grad_p != nullptr) {
      Eigen::Map<const Mat> W(theta_.data() + offs_[l], out, in);
      delta = W.transpose() * delta;
    }
  }
  const int d = cfg_.dim;
  if (grad_x != nullptr) *grad_x = delta.topRows(d);
  if (grad_p != nullptr) *grad_p = cfg_.underdamped ? Mat(delta.middleRows(d, d)) : Mat();
  return grad;
}

Vec ScoreNet::grad_params(int k, const Vec& x, const Vec* p, const Vec& upstream) const {
  const Mat X = x, U = upstream;
  if (p != nullptr) {
    const Mat Pm = *p;
    return grad_params(std::vector<int>{k}, X, &Pm, U);
  }
  return grad_params(std::vector<int>{k}, X, nullptr, U);
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kNetMagic[8] = {'L', 'D', 'N', 'E', 'T', '0', '1', '\0'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error("checkpoint truncated");
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& os, const ScoreNet& net) {
  const auto& c = net.config();
  os.write(kNetMagic, 8);
  put<std::uint32_t>(os, c.underdamped ? 1 : 0);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(c.conditioning));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(c.activation));
  put<std::uint32_t>(os, c.embed_width);
  put<std::uint32_t>(os, c.N);
  put<double>(os, c.sigma_min);
  put<double>(os, c.sigma_max);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(net.widths().size()));
  for (int w : net.widths()) put<std::uint32_t>(os, w);
  put<std::uint64_t>(os, net.num_params());
  os.write(reinterpret_cast<const char*>(net.params().data()),
           static_cast<std::streamsize>(net.num_params() * sizeof(double)));
  if (!os) throw Error("failed to write checkpoint");
}

ScoreNet read_checkpoint(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kNetMagic, 8) != 0) throw Error("not a score-net checkpoint (bad magic)");
  ScoreNetConfig c;
  c.underdamped = get<std::uint32_t>(is) != 0;
  const auto cond = get<std::uint32_t>(is);
  const auto act = get<std::uint32_t>(is);
  if (cond > 1 || act > 1) throw Error("checkpoint has unknown conditioning/activation");
  c.conditioning = static_cast<Conditioning>(cond);
  c.activation = static_cast<Activation>(act);
  c.embed_width = static_cast<int>(get<std::uint32_t>(is));
  c.N = static_cast<int>(get<std::uint32_t>(is));
  c.sigma_min = get<double>(is);
  c.sigma_max = get<double>(is);
  const auto nw = get<std::uint32_t>(is);
  if (nw < 2 || nw > 1024) throw Error("checkpoint has implausible layer count");
  std::vector<int> widths(nw);
  for (auto& w : widths) w = static_cast<int>(get<std::uint32_t>(is));
  c.dim = widths.back();
  c.hidden.assign(widths.begin() + 1, widths.end() - 1);
  ScoreNet net(c);
  if (net.widths() != widths) throw Error("checkpoint widths inconsistent with its header");
  const auto np = get<std::uint64_t>(is);
  if (static_cast<Eigen::Index>(np) != net.num_params()) throw Error("checkpoint parameter count mismatch");
  is.read(reinterpret_cast<char*>(net.params().data()), static_cast<std::streamsize>(np * sizeof(double)));
  if (!is) throw Error("checkpoint truncated");
  return net;
}

void save_checkpoint(const std::string& path, const ScoreNet& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path);
  write_checkpoint(os, net);
}

ScoreNet load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return read_checkpoint(is);
}

}  // namespace ldiff
