#pragma once

// Flow-based density model of one executable.
//
// An invertible stack of affine coupling layers maps encoded observations x
// to a latent z that training pushes towards N(0, I). Each layer keeps the
// masked dimensions a and updates the rest:
//
//   y_q = x_q * exp(s(a)) + t(a),   s = s_max * tanh(net_s(a)),   t = net_t(a)
//
// so log|det J| is the sum of s over the transformed dimensions and is
// bounded by s_max per dimension. Both nets have one tanh hidden layer.
// Output layers start at zero, which makes a fresh model the identity map.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "scd/encoding.hpp"
#include "scd/error.hpp"
#include "scd/matrix.hpp"
#include "scd/random.hpp"
#include "scd/trace.hpp"

namespace scd {

struct FlowConfig {
  std::size_t layers = 4;
  std::size_t hidden_width = 16;
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double learning_rate = 5e-3;
  double s_max = 3.0;

  bool operator==(const FlowConfig&) const = default;
};

/// Feed-forward net with one tanh hidden layer. Weights are row-major.
struct Mlp {
  std::size_t in = 0, hidden = 0, out = 0;
  std::vector<double> w1, b1, w2, b2;

  Mlp() = default;
  Mlp(std::size_t in_, std::size_t hidden_, std::size_t out_)
      : in(in_), hidden(hidden_), out(out_), w1(hidden_ * in_), b1(hidden_), w2(out_ * hidden_), b2(out_) {}

  std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  template <typename F>
  void for_each_parameter(F&& f) {
    for (auto* v : {&w1, &b1, &w2, &b2})
      for (double& p : *v) f(p);
  }
  template <typename F>
  void for_each_parameter(F&& f) const {
    for (auto* v : {&w1, &b1, &w2, &b2})
      for (double p : *v) f(p);
  }

  bool operator==(const Mlp&) const = default;
};

struct CouplingLayer {
  std::vector<bool> mask;  // true: passes through unchanged
  std::vector<std::size_t> pass;
  std::vector<std::size_t> transformed;
  Mlp scale_net;
  Mlp translate_net;

  bool operator==(const CouplingLayer&) const = default;
};

struct TrainLog {
  double final_nll = 0.0;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;

  bool operator==(const TrainLog&) const = default;
};

struct FlowModel {
  ExecutableSchema schema;
  std::vector<ColumnEncoder> encoders;
  std::vector<CouplingLayer> layers;
  std::size_t dim = 0;
  bool padded = false;
  FlowConfig config;
  TrainLog train_log;

  /// Dimensions that correspond to schema elements (excludes padding).
  std::size_t modeled_dims() const { return padded ? dim - 1 : dim; }

  bool operator==(const FlowModel&) const = default;
};

enum class SampleOrigin { Marginal, Conditional };

struct SampleMatrix {
  Matrix values;
  SampleOrigin origin = SampleOrigin::Marginal;
};

struct ConditionalOptions {
  std::size_t steps = 100;
  double step_size = 0.1;
  std::size_t restarts = 3;
};

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2*pi)

// ---------------------------------------------------------------------------
// Construction

inline CouplingLayer make_coupling_layer(std::vector<bool> mask, std::size_t width) {
  CouplingLayer layer;
  layer.mask = std::move(mask);
  for (std::size_t d = 0; d < layer.mask.size(); ++d) (layer.mask[d] ? layer.pass : layer.transformed).push_back(d);
  if (layer.pass.empty() || layer.transformed.empty())
    throw Error(Errc::InvalidArgument, "coupling mask needs both partitions non-empty");
  layer.scale_net = Mlp(layer.pass.size(), width, layer.transformed.size());
  layer.translate_net = Mlp(layer.pass.size(), width, layer.transformed.size());
  return layer;
}

/// Alternating parity masks. Even layers pass even dimensions through.
inline std::vector<bool> alternating_mask(std::size_t dim, std::size_t layer_index) {
  std::vector<bool> mask(dim);
  for (std::size_t d = 0; d < dim; ++d) mask[d] = (d % 2) == (layer_index % 2);
  return mask;
}

/// Identity flow with every parameter zero.
inline FlowModel make_identity_flow(std::size_t dim, const FlowConfig& config = {}) {
  if (dim < 2) throw Error(Errc::InvalidArgument, "flow dimension must be at least 2");
  FlowModel m;
  m.dim = dim;
  m.config = config;
  for (std::size_t l = 0; l < config.layers; ++l)
    m.layers.push_back(make_coupling_layer(alternating_mask(dim, l), config.hidden_width));
  return m;
}

/// Identity flow whose hidden layers are randomly initialized so training can
/// break symmetry. Output layers stay zero.
inline FlowModel make_initial_flow(std::size_t dim, const FlowConfig& config, std::uint64_t seed) {
  FlowModel m = make_identity_flow(dim, config);
  Rng rng(seed);
  for (auto& layer : m.layers) {
    for (Mlp* net : {&layer.scale_net, &layer.translate_net}) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(net->in));
      for (double& w : net->w1) w = bound * (2.0 * uniform01(rng) - 1.0);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Layer kernels

namespace detail {

inline void mlp_hidden(const Mlp& net, std::span<const double> a, std::span<double> h) {
  for (std::size_t k = 0; k < net.hidden; ++k) {
    double acc = net.b1[k];
    const double* w = net.w1.data() + k * net.in;
    for (std::size_t i = 0; i < net.in; ++i) acc += w[i] * a[i];
    h[k] = std::tanh(acc);
  }
}

inline void mlp_output(const Mlp& net, std::span<const double> h, std::span<double> o) {
  for (std::size_t q = 0; q < net.out; ++q) {
    double acc = net.b2[q];
    const double* w = net.w2.data() + q * net.hidden;
    for (std::size_t k = 0; k < net.hidden; ++k) acc += w[k] * h[k];
    o[q] = acc;
  }
}

/// Backprop through one net given dL/d(output). Accumulates parameter
/// gradients into `grad` when non-null and adds dL/da into `da`.
inline void mlp_backward(const Mlp& net, std::span<const double> a, std::span<const double> h,
                         std::span<const double> dout, Mlp* grad, std::span<double> da, std::span<double> scratch) {
  std::span<double> dpre = scratch.subspan(0, net.hidden);
  for (std::size_t k = 0; k < net.hidden; ++k) {
    double acc = 0.0;
    for (std::size_t q = 0; q < net.out; ++q) acc += net.w2[q * net.hidden + k] * dout[q];
    dpre[k] = acc * (1.0 - h[k] * h[k]);
  }
  if (grad) {
    for (std::size_t q = 0; q < net.out; ++q) {
      grad->b2[q] += dout[q];
      double* gw = grad->w2.data() + q * net.hidden;
      for (std::size_t k = 0; k < net.hidden; ++k) gw[k] += dout[q] * h[k];
    }
    for (std::size_t k = 0; k < net.hidden; ++k) {
      grad->b1[k] += dpre[k];
      double* gw = grad->w1.data() + k * net.in;
      for (std::size_t i = 0; i < net.in; ++i) gw[i] += dpre[k] * a[i];
    }
  }
  for (std::size_t i = 0; i < net.in; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < net.hidden; ++k) acc += net.w1[k * net.in + i] * dpre[k];
    da[i] += acc;
  }
}

/// Activations of one layer, kept for the backward pass.
struct LayerCache {
  std::vector<double> input;
  std::vector<double> a;
  std::vector<double> hs, ht;
  std::vector<double> tanh_raw;  // tanh(net_s(a))
  std::vector<double> s;
  std::vector<double> t;
};

inline void layer_coefficients(const CouplingLayer& layer, double s_max, std::span<const double> u, LayerCache& c) {
  const std::size_t p = layer.pass.size(), q = layer.transformed.size();
  const std::size_t width = layer.scale_net.hidden;
  c.a.resize(p);
  for (std::size_t i = 0; i < p; ++i) c.a[i] = u[layer.pass[i]];
  c.hs.resize(width);
  c.ht.resize(layer.translate_net.hidden);
  c.tanh_raw.resize(q);
  c.s.resize(q);
  c.t.resize(q);
  mlp_hidden(layer.scale_net, c.a, c.hs);
  mlp_output(layer.scale_net, c.hs, c.tanh_raw);
  for (std::size_t j = 0; j < q; ++j) {
    c.tanh_raw[j] = std::tanh(c.tanh_raw[j]);
    c.s[j] = s_max * c.tanh_raw[j];
  }
  mlp_hidden(layer.translate_net, c.a, c.ht);
  mlp_output(layer.translate_net, c.ht, c.t);
}

/// v = layer(u); returns the layer's log|det J|.
inline double layer_forward(const CouplingLayer& layer, double s_max, std::span<const double> u, std::span<double> v,
                            LayerCache& c) {
  c.input.assign(u.begin(), u.end());
  layer_coefficients(layer, s_max, u, c);
  for (std::size_t d : layer.pass) v[d] = u[d];
  double log_det = 0.0;
  for (std::size_t j = 0; j < layer.transformed.size(); ++j) {
    const std::size_t d = layer.transformed[j];
    v[d] = u[d] * std::exp(c.s[j]) + c.t[j];
    log_det += c.s[j];
  }
  assert(std::abs(log_det) <= s_max * static_cast<double>(u.size()));
  return log_det;
}

inline void layer_inverse(const CouplingLayer& layer, double s_max, std::span<const double> v, std::span<double> u,
                          LayerCache& c) {
  layer_coefficients(layer, s_max, v, c);  // pass-through dims are identical in u and v
  for (std::size_t d : layer.pass) u[d] = v[d];
  for (std::size_t j = 0; j < layer.transformed.size(); ++j) {
    const std::size_t d = layer.transformed[j];
    u[d] = (v[d] - c.t[j]) * std::exp(-c.s[j]);
  }
}

/// Given dL/dv where L = (downstream loss) - log_det(layer), writes dL/du.
inline void layer_backward(const CouplingLayer& layer, double s_max, const LayerCache& c, std::span<const double> dv,
                           std::span<double> du, CouplingLayer* grad, std::vector<double>& scratch) {
  const std::size_t p = layer.pass.size(), q = layer.transformed.size();
  const std::size_t width = std::max(layer.scale_net.hidden, layer.translate_net.hidden);
  scratch.resize(2 * q + p + width);
  std::span<double> d_raw(scratch.data(), q);
  std::span<double> d_t(scratch.data() + q, q);
  std::span<double> da(scratch.data() + 2 * q, p);
  std::span<double> work(scratch.data() + 2 * q + p, width);

  for (std::size_t d : layer.pass) du[d] = dv[d];
  for (std::size_t j = 0; j < q; ++j) {
    const std::size_t d = layer.transformed[j];
    const double e = std::exp(c.s[j]);
    du[d] = dv[d] * e;
    d_t[j] = dv[d];
    const double ds = dv[d] * c.input[d] * e - 1.0;
    d_raw[j] = ds * s_max * (1.0 - c.tanh_raw[j] * c.tanh_raw[j]);
  }
  std::fill(da.begin(), da.end(), 0.0);
  mlp_backward(layer.scale_net, c.a, c.hs, d_raw, grad ? &grad->scale_net : nullptr, da, work);
  mlp_backward(layer.translate_net, c.a, c.ht, d_t, grad ? &grad->translate_net : nullptr, da, work);
  for (std::size_t i = 0; i < p; ++i) du[layer.pass[i]] += da[i];
}

inline void require_finite(std::span<const double> x, const char* what) {
  for (double v : x)
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteInput, std::string(what) + " contains a non-finite entry");
}

inline void require_dim(const FlowModel& m, std::span<const double> x) {
  if (x.size() != m.dim)
    throw Error(Errc::InvalidArgument,
                "row has " + std::to_string(x.size()) + " entries, model dimension is " + std::to_string(m.dim));
}

inline double standard_normal_log_density(std::span<const double> z) {
  double sq = 0.0;
  for (double v : z) sq += v * v;
  return -0.5 * static_cast<double>(z.size()) * kLog2Pi - 0.5 * sq;
}

/// Per-sample negative log-likelihood together with the cached activations.
struct Evaluation {
  std::vector<LayerCache> caches;
  std::vector<double> z;
  double log_det = 0.0;
};

inline void evaluate(const FlowModel& m, std::span<const double> x, Evaluation& ev) {
  ev.caches.resize(m.layers.size());
  std::vector<double> cur(x.begin(), x.end()), next(m.dim);
  ev.log_det = 0.0;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    ev.log_det += layer_forward(m.layers[l], m.config.s_max, cur, next, ev.caches[l]);
    std::swap(cur, next);
  }
  ev.z = std::move(cur);
}

/// Backprop of NLL = -log N(z) - log_det. Writes dNLL/dx into dx.
inline void backward(const FlowModel& m, const Evaluation& ev, std::span<double> dx, FlowModel* grad) {
  std::vector<double> dcur(ev.z.begin(), ev.z.end()), dprev(m.dim), scratch;
  for (std::size_t l = m.layers.size(); l-- > 0;) {
    layer_backward(m.layers[l], m.config.s_max, ev.caches[l], dcur, dprev, grad ? &grad->layers[l] : nullptr,
                   scratch);
    std::swap(dcur, dprev);
  }
  std::copy(dcur.begin(), dcur.end(), dx.begin());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Evaluation

struct ForwardResult {
  std::vector<double> z;
  double log_det = 0.0;
};

inline ForwardResult forward(const FlowModel& m, std::span<const double> x) {
  detail::require_dim(m, x);
  detail::require_finite(x, "flow input");
  detail::Evaluation ev;
  detail::evaluate(m, x, ev);
  return {std::move(ev.z), ev.log_det};
}

inline std::vector<double> inverse(const FlowModel& m, std::span<const double> z) {
  detail::require_dim(m, z);
  detail::require_finite(z, "latent input");
  std::vector<double> cur(z.begin(), z.end()), prev(m.dim);
  detail::LayerCache cache;
  for (std::size_t l = m.layers.size(); l-- > 0;) {
    detail::layer_inverse(m.layers[l], m.config.s_max, cur, prev, cache);
    std::swap(cur, prev);
  }
  return cur;
}

/// log p(x) = log N(f(x); 0, I) + log|det df/dx|.
inline double log_likelihood(const FlowModel& m, std::span<const double> x) {
  auto fr = forward(m, x);
  return detail::standard_normal_log_density(fr.z) + fr.log_det;
}

/// log p(x) and its gradient with respect to x.
inline double log_likelihood_gradient(const FlowModel& m, std::span<const double> x, std::span<double> grad) {
  detail::require_dim(m, x);
  detail::require_finite(x, "flow input");
  detail::Evaluation ev;
  detail::evaluate(m, x, ev);
  detail::backward(m, ev, grad, nullptr);
  for (double& g : grad) g = -g;
  return detail::standard_normal_log_density(ev.z) + ev.log_det;
}

// ---------------------------------------------------------------------------
// Parameters

template <typename Model, typename F>
void for_each_parameter(Model& m, F&& f) {
  for (auto& layer : m.layers) {
    layer.scale_net.for_each_parameter(f);
    layer.translate_net.for_each_parameter(f);
  }
}

inline std::vector<double> get_parameters(const FlowModel& m) {
  std::vector<double> out;
  for_each_parameter(m, [&](double p) { out.push_back(p); });
  return out;
}

inline void set_parameters(FlowModel& m, std::span<const double> params) {
  std::size_t i = 0;
  for_each_parameter(m, [&](double& p) { p = params[i++]; });
  if (i != params.size()) throw Error(Errc::InvalidArgument, "parameter vector length mismatch");
}

/// Zero-valued copy of the model's parameter layout.
inline FlowModel zero_like(const FlowModel& m) {
  FlowModel g = m;
  for_each_parameter(g, [](double& p) { p = 0.0; });
  return g;
}

/// Mean NLL over the selected rows and its analytic gradient with respect to
/// every parameter (get_parameters() order).
inline double mean_nll_gradient(const FlowModel& m, const Matrix& x, std::span<const std::size_t> rows,
                                std::vector<double>& gradient) {
  FlowModel g = zero_like(m);
  detail::Evaluation ev;
  std::vector<double> dx(m.dim);
  double total = 0.0;
  for (std::size_t r : rows) {
    detail::evaluate(m, x.row(r), ev);
    total += -(detail::standard_normal_log_density(ev.z) + ev.log_det);
    detail::backward(m, ev, dx, &g);
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  gradient = get_parameters(g);
  for (double& v : gradient) v *= inv;
  return total * inv;
}

inline double mean_nll(const FlowModel& m, const Matrix& x) {
  double total = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) total -= log_likelihood(m, x.row(r));
  return total / static_cast<double>(x.rows());
}

// ---------------------------------------------------------------------------
// Training

/// Maximum-likelihood fit with mini-batch Adam. Deterministic given the seed.
inline FlowModel fit_flow(const Matrix& x, const FlowConfig& config, std::uint64_t seed) {
  if (x.rows() < 2) throw Error(Errc::TooFewRows, "need at least 2 rows to fit a flow");
  if (x.cols() < 2) throw Error(Errc::InvalidArgument, "flow needs at least 2 columns; pad first");
  detail::require_finite(x.data(), "training matrix");

  FlowModel m = make_initial_flow(x.cols(), config, derive_seed(seed, "init"));
  Rng rng(derive_seed(seed, "batches"));

  std::vector<double> params = get_parameters(m), grad;
  std::vector<double> m1(params.size(), 0.0), m2(params.size(), 0.0);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double b1t = 1.0, b2t = 1.0;

  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = std::max<std::size_t>(1, std::min(config.batch_size, x.rows()));

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      const double loss = mean_nll_gradient(m, x, std::span(order).subspan(start, len), grad);
      if (!std::isfinite(loss))
        throw Error(Errc::NonFiniteLoss, "training diverged at epoch " + std::to_string(epoch));
      b1t *= beta1;
      b2t *= beta2;
      for (std::size_t i = 0; i < params.size(); ++i) {
        m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
        m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double mhat = m1[i] / (1.0 - b1t);
        const double vhat = m2[i] / (1.0 - b2t);
        params[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + eps);
      }
      set_parameters(m, params);
    }
  }

  m.train_log.final_nll = mean_nll(m, x);
  m.train_log.epochs = config.epochs;
  m.train_log.seed = seed;
  if (!std::isfinite(m.train_log.final_nll)) throw Error(Errc::NonFiniteLoss, "final NLL is not finite");
  return m;
}

/// Encodes a trace, pads single-column executables with an auxiliary
/// standard-normal column, and fits the flow.
inline FlowModel train_model(const TraceDataset& ds, const FlowConfig& config, std::uint64_t seed) {
  if (ds.schema.elements.empty())
    throw Error(Errc::InvalidArgument, "executable " + ds.schema.id + " has no elements to model");
  if (ds.rows.size() < 2) throw Error(Errc::TooFewRows, "executable " + ds.schema.id + " has fewer than 2 rows");
  auto enc = encode_matrix(ds, derive_seed(seed, "encode"));
  Matrix x = enc.values;
  const bool padded = x.cols() < 2;
  if (padded) {
    Matrix p(x.rows(), 2);
    Rng rng(derive_seed(seed, "padding"));
    for (std::size_t r = 0; r < x.rows(); ++r) {
      p(r, 0) = x(r, 0);
      p(r, 1) = standard_normal(rng);
    }
    x = std::move(p);
  }
  FlowModel m = fit_flow(x, config, derive_seed(seed, "fit"));
  m.schema = ds.schema;
  m.encoders = std::move(enc.encoders);
  m.padded = padded;
  return m;
}

// ---------------------------------------------------------------------------
// Generation

inline SampleMatrix sample(const FlowModel& m, std::size_t n, std::uint64_t seed) {
  SampleMatrix out{Matrix(n, m.dim), SampleOrigin::Marginal};
  Rng rng(seed);
  std::vector<double> z(m.dim);
  for (std::size_t r = 0; r < n; ++r) {
    for (double& v : z) v = standard_normal(rng);
    auto x = inverse(m, z);
    std::copy(x.begin(), x.end(), out.values.row(r).begin());
  }
  return out;
}

/// Conditional generation by constrained MAP: constrained coordinates of row
/// i are fixed to targets(i, k); the free coordinates start from a marginal
/// draw and climb log p(x) with backtracking gradient steps. The best of
/// `restarts` starts is kept.
inline SampleMatrix conditional_sample(const FlowModel& m, std::span<const std::size_t> dims, const Matrix& targets,
                                       std::uint64_t seed, const ConditionalOptions& opt = {}) {
  if (targets.cols() != dims.size())
    throw Error(Errc::InvalidArgument, "target matrix width must equal the number of constrained dims");
  std::vector<bool> fixed(m.dim, false);
  for (std::size_t d : dims) {
    if (d >= m.dim) throw Error(Errc::InvalidArgument, "constraint index " + std::to_string(d) + " out of range");
    fixed[d] = true;
  }
  if (static_cast<std::size_t>(std::count(fixed.begin(), fixed.end(), true)) >= m.dim)
    throw Error(Errc::AllDimsConstrained, "conditional sampling needs at least one free dimension");
  detail::require_finite(targets.data(), "constraint targets");

  const std::size_t n = targets.rows();
  SampleMatrix out{Matrix(n, m.dim), SampleOrigin::Conditional};
  Rng rng(seed);
  std::vector<double> z(m.dim), x(m.dim), trial(m.dim), grad(m.dim), best;
  const std::size_t restarts = std::max<std::size_t>(1, opt.restarts);

  for (std::size_t r = 0; r < n; ++r) {
    double best_ll = -std::numeric_limits<double>::infinity();
    for (std::size_t attempt = 0; attempt < restarts; ++attempt) {
      for (double& v : z) v = standard_normal(rng);
      x = inverse(m, z);
      for (std::size_t k = 0; k < dims.size(); ++k) x[dims[k]] = targets(r, k);
      double ll = log_likelihood_gradient(m, x, grad);
      double step = opt.step_size;
      for (std::size_t it = 0; it < opt.steps && step > 1e-12; ++it) {
        trial = x;
        for (std::size_t d = 0; d < m.dim; ++d)
          if (!fixed[d]) trial[d] += step * grad[d];
        std::vector<double> trial_grad(m.dim);
        double trial_ll = log_likelihood_gradient(m, trial, trial_grad);
        if (std::isfinite(trial_ll) && trial_ll >= ll) {
          x.swap(trial);
          grad.swap(trial_grad);
          ll = trial_ll;
        } else {
          step *= 0.5;
        }
      }
      if (ll > best_ll || best.empty()) {
        best_ll = ll;
        best = x;
      }
    }
    std::copy(best.begin(), best.end(), out.values.row(r).begin());
    best.clear();
  }
  return out;
}

inline SampleMatrix conditional_sample(const FlowModel& m, const std::map<std::size_t, double>& constraints,
                                       std::size_t n, std::uint64_t seed, const ConditionalOptions& opt = {}) {
  std::vector<std::size_t> dims;
  for (const auto& [d, _] : constraints) dims.push_back(d);
  Matrix targets(n, dims.size());
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t k = 0;
    for (const auto& [_, v] : constraints) targets(r, k++) = v;
  }
  return conditional_sample(m, dims, targets, seed, opt);
}

// ---------------------------------------------------------------------------
// Model files (JSON, decimal doubles printed for exact round trip)

namespace detail {

inline json mlp_to_json(const Mlp& n) {
  return {{"in", n.in}, {"hidden", n.hidden}, {"out", n.out},
          {"w1", n.w1}, {"b1", n.b1},         {"w2", n.w2},  {"b2", n.b2}};
}

inline Mlp mlp_from_json(const json& j) {
  Mlp n(j.at("in").get<std::size_t>(), j.at("hidden").get<std::size_t>(), j.at("out").get<std::size_t>());
  auto load = [&](const char* key, std::vector<double>& dst) {
    auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != dst.size()) throw Error(Errc::MalformedModel, std::string("bad length for ") + key);
    dst = std::move(v);
  };
  load("w1", n.w1);
  load("b1", n.b1);
  load("w2", n.w2);
  load("b2", n.b2);
  return n;
}

}  // namespace detail

inline json config_to_json(const FlowConfig& c) {
  return {{"layers", c.layers},           {"hidden_width", c.hidden_width}, {"epochs", c.epochs},
          {"batch_size", c.batch_size},   {"learning_rate", c.learning_rate}, {"s_max", c.s_max}};
}

inline FlowConfig config_from_json(const json& j) {
  FlowConfig c;
  c.layers = j.at("layers").get<std::size_t>();
  c.hidden_width = j.at("hidden_width").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.s_max = j.at("s_max").get<double>();
  return c;
}

inline json flow_to_json(const FlowModel& m) {
  json layers = json::array();
  for (const auto& l : m.layers) {
    json mask = json::array();
    for (bool b : l.mask) mask.push_back(b ? 1 : 0);
    layers.push_back({{"mask", mask},
                      {"scale_net", detail::mlp_to_json(l.scale_net)},
                      {"translate_net", detail::mlp_to_json(l.translate_net)}});
  }
  json encoders = json::array();
  for (const auto& e : m.encoders) encoders.push_back(encoder_to_json(e));
  return {{"format", "scd-flow/1"},
          {"schema", schema_to_json(m.schema)},
          {"encoders", encoders},
          {"dim", m.dim},
          {"padded", m.padded},
          {"config", config_to_json(m.config)},
          {"layers", layers},
          {"train_log",
           {{"final_nll", m.train_log.final_nll}, {"epochs", m.train_log.epochs}, {"seed", m.train_log.seed}}}};
}

inline FlowModel flow_from_json(const json& j, const std::string& context = "model") {
  try {
    if (j.at("format").get<std::string>() != "scd-flow/1")
      throw Error(Errc::MalformedModel, context + ": unsupported format");
    FlowModel m;
    m.schema = schema_from_json(j.at("schema"), context);
    for (const auto& e : j.at("encoders")) m.encoders.push_back(encoder_from_json(e));
    m.dim = j.at("dim").get<std::size_t>();
    m.padded = j.at("padded").get<bool>();
    m.config = config_from_json(j.at("config"));
    for (const auto& lj : j.at("layers")) {
      std::vector<bool> mask;
      for (const auto& b : lj.at("mask")) mask.push_back(b.get<int>() != 0);
      if (mask.size() != m.dim) throw Error(Errc::MalformedModel, context + ": mask length differs from dim");
      CouplingLayer layer = make_coupling_layer(mask, m.config.hidden_width);
      layer.scale_net = detail::mlp_from_json(lj.at("scale_net"));
      layer.translate_net = detail::mlp_from_json(lj.at("translate_net"));
      m.layers.push_back(std::move(layer));
    }
    const auto& tl = j.at("train_log");
    m.train_log = {tl.at("final_nll").get<double>(), tl.at("epochs").get<std::size_t>(),
                   tl.at("seed").get<std::uint64_t>()};
    if (m.encoders.size() != m.schema.elements.size() || m.modeled_dims() != m.schema.elements.size())
      throw Error(Errc::MalformedModel, context + ": encoders/dim inconsistent with schema");
    return m;
  } catch (const json::exception& e) {
    throw Error(Errc::MalformedModel, context + ": " + e.what());
  }
}

inline void save_model(const std::filesystem::path& path, const FlowModel& m, const json& manifest = nullptr) {
  json j = flow_to_json(m);
  if (!manifest.is_null()) j["manifest"] = manifest;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write model file " + path.string());
  out << j.dump(1) << '\n';
}

inline FlowModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open model file " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::MalformedModel, path.string() + ": not valid JSON");
  return flow_from_json(j, path.string());
}

}  // namespace scd
