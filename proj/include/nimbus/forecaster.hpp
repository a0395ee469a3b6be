#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "nimbus/rng.hpp"

// Memory forecaster: a 2-layer LSTM (32 then 16 hidden units) over 2
// aggregated features (total memory MiB, running pod count) with a dense
// head, predicting total memory one scrape interval ahead. Training is
// backpropagation through time with plain gradient descent and global
// gradient-norm clipping; gradients are verifiable against central finite
// differences (see analytic_gradient / finite_diff_gradient).

namespace nimbus::forecast {

inline constexpr int kLookback = 20;
inline constexpr int kFeatures = 2;
inline constexpr int kHorizonS = 15;
inline constexpr double kGradClipNorm = 5.0;

struct EmptyDataset : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct BadWindowLength : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Scaler {
  std::array<double, kFeatures> mean{0.0, 0.0};
  std::array<double, kFeatures> std{1.0, 1.0};
};

using FeatureRow = std::array<double, kFeatures>;

// Per-feature mean and population standard deviation, std floored at 1e-8.
inline Scaler fit_scaler(const std::vector<FeatureRow>& dataset) {
  if (dataset.empty()) throw EmptyDataset("fit_scaler: empty dataset");
  Scaler s;
  for (int f = 0; f < kFeatures; ++f) {
    double sum = 0.0;
    for (const auto& row : dataset) sum += row[f];
    s.mean[f] = sum / dataset.size();
    double var = 0.0;
    for (const auto& row : dataset) {
      double d = row[f] - s.mean[f];
      var += d * d;
    }
    s.std[f] = std::max(std::sqrt(var / dataset.size()), 1e-8);
  }
  return s;
}

inline double standardize(const Scaler& s, int feature, double v) {
  return (v - s.mean[feature]) / s.std[feature];
}

inline double destandardize(const Scaler& s, int feature, double v) {
  return v * s.std[feature] + s.mean[feature];
}

// Gate order used throughout: input, forget, cell candidate, output.
enum Gate { kGateI = 0, kGateF = 1, kGateG = 2, kGateO = 3 };

struct LstmLayerParams {
  int input_size = 0;
  int hidden_size = 0;
  // W[g]: hidden x input (row-major), U[g]: hidden x hidden, b[g]: hidden.
  std::array<std::vector<double>, 4> W, U, b;

  void resize() {
    for (int g = 0; g < 4; ++g) {
      W[g].assign(static_cast<std::size_t>(hidden_size) * input_size, 0.0);
      U[g].assign(static_cast<std::size_t>(hidden_size) * hidden_size, 0.0);
      b[g].assign(static_cast<std::size_t>(hidden_size), 0.0);
    }
  }
};

struct LstmParams {
  LstmLayerParams l1;
  LstmLayerParams l2;
  std::vector<double> head_w;  // hidden2
  std::vector<double> head_b;  // 1

  LstmParams(int hidden1 = 32, int hidden2 = 16) {
    l1.input_size = kFeatures;
    l1.hidden_size = hidden1;
    l2.input_size = hidden1;
    l2.hidden_size = hidden2;
    l1.resize();
    l2.resize();
    head_w.assign(static_cast<std::size_t>(hidden2), 0.0);
    head_b.assign(1, 0.0);
  }
};

inline const char* gate_suffix(int g) {
  static const char* names[4] = {"i", "f", "g", "o"};
  return names[g];
}

// Visit every parameter tensor with a stable name; used for updates,
// clipping, serialization and the gradient check.
template <typename P, typename Fn>
void for_each_tensor(P& params, Fn&& fn) {
  auto layer = [&](auto& l, const std::string& prefix) {
    for (int g = 0; g < 4; ++g) fn(prefix + ".W_" + gate_suffix(g), l.W[g]);
    for (int g = 0; g < 4; ++g) fn(prefix + ".U_" + gate_suffix(g), l.U[g]);
    for (int g = 0; g < 4; ++g) fn(prefix + ".b_" + gate_suffix(g), l.b[g]);
  };
  layer(params.l1, "l1");
  layer(params.l2, "l2");
  fn(std::string("head.W"), params.head_w);
  fn(std::string("head.b"), params.head_b);
}

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases except the
// forget gate at +1.
inline LstmParams init_lstm(std::uint64_t seed, int hidden1 = 32,
                            int hidden2 = 16) {
  LstmParams p(hidden1, hidden2);
  SplitMix64 rng(seed);
  auto fill = [&](std::vector<double>& v, int fan_in) {
    double k = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& x : v) x = rng.uniform(-k, k);
  };
  auto init_layer = [&](LstmLayerParams& l) {
    for (int g = 0; g < 4; ++g) {
      fill(l.W[g], l.input_size);
      fill(l.U[g], l.hidden_size);
    }
    std::fill(l.b[kGateF].begin(), l.b[kGateF].end(), 1.0);
  };
  init_layer(p.l1);
  init_layer(p.l2);
  fill(p.head_w, hidden2);
  return p;
}

struct ForecastResult {
  double predicted_total_mem_mib = 0.0;
  int horizon_s = kHorizonS;
  double confidence = 1.0;
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Full per-step activations cached for BPTT.
struct LayerTrace {
  // [t][h]
  std::vector<std::vector<double>> gate[4];
  std::vector<std::vector<double>> c, tanh_c, h;
  std::vector<std::vector<double>> x;  // layer inputs
};

inline void lstm_layer_forward(const LstmLayerParams& l,
                               const std::vector<std::vector<double>>& inputs,
                               LayerTrace& trace) {
  const int H = l.hidden_size;
  const int I = l.input_size;
  const std::size_t T = inputs.size();
  for (int g = 0; g < 4; ++g) trace.gate[g].assign(T, std::vector<double>(H));
  trace.c.assign(T, std::vector<double>(H));
  trace.tanh_c.assign(T, std::vector<double>(H));
  trace.h.assign(T, std::vector<double>(H));
  trace.x = inputs;

  std::vector<double> h_prev(H, 0.0), c_prev(H, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& x = inputs[t];
    for (int j = 0; j < H; ++j) {
      double pre[4];
      for (int g = 0; g < 4; ++g) {
        double acc = l.b[g][j];
        const double* wrow = &l.W[g][static_cast<std::size_t>(j) * I];
        for (int k = 0; k < I; ++k) acc += wrow[k] * x[k];
        const double* urow = &l.U[g][static_cast<std::size_t>(j) * H];
        for (int k = 0; k < H; ++k) acc += urow[k] * h_prev[k];
        pre[g] = acc;
      }
      double i = sigmoid(pre[kGateI]);
      double f = sigmoid(pre[kGateF]);
      double g_ = std::tanh(pre[kGateG]);
      double o = sigmoid(pre[kGateO]);
      double c = f * c_prev[j] + i * g_;
      double tc = std::tanh(c);
      trace.gate[kGateI][t][j] = i;
      trace.gate[kGateF][t][j] = f;
      trace.gate[kGateG][t][j] = g_;
      trace.gate[kGateO][t][j] = o;
      trace.c[t][j] = c;
      trace.tanh_c[t][j] = tc;
      trace.h[t][j] = o * tc;
    }
    h_prev = trace.h[t];
    c_prev = trace.c[t];
  }
}

// BPTT through one layer. dh_ext[t] is the external gradient flowing into
// h_t (from the layer above, or the head for the last step). Returns
// gradients for this layer's tensors in `grads` and the gradient w.r.t. the
// layer inputs.
inline std::vector<std::vector<double>> lstm_layer_backward(
    const LstmLayerParams& l, const LayerTrace& trace,
    const std::vector<std::vector<double>>& dh_ext, LstmLayerParams& grads) {
  const int H = l.hidden_size;
  const int I = l.input_size;
  const std::size_t T = trace.h.size();
  std::vector<std::vector<double>> dx(T, std::vector<double>(I, 0.0));
  std::vector<double> dh(H, 0.0), dc(H, 0.0);
  const std::vector<double> zero_state(H, 0.0);

  for (std::size_t ti = T; ti-- > 0;) {
    std::vector<double> da[4];
    for (auto& v : da) v.assign(H, 0.0);
    const auto& c_prev_v = ti > 0 ? trace.c[ti - 1] : zero_state;
    for (int j = 0; j < H; ++j) {
      double dh_t = dh[j] + dh_ext[ti][j];
      double o = trace.gate[kGateO][ti][j];
      double tc = trace.tanh_c[ti][j];
      double dc_t = dc[j] + dh_t * o * (1.0 - tc * tc);
      double i = trace.gate[kGateI][ti][j];
      double f = trace.gate[kGateF][ti][j];
      double g = trace.gate[kGateG][ti][j];
      double do_ = dh_t * tc;
      double di = dc_t * g;
      double dg = dc_t * i;
      double df = dc_t * c_prev_v[j];
      da[kGateI][j] = di * i * (1.0 - i);
      da[kGateF][j] = df * f * (1.0 - f);
      da[kGateG][j] = dg * (1.0 - g * g);
      da[kGateO][j] = do_ * o * (1.0 - o);
      dc[j] = dc_t * f;  // into step t-1
    }
    const auto& x = trace.x[ti];
    const std::vector<double>* h_prev =
        ti > 0 ? &trace.h[ti - 1] : nullptr;
    std::vector<double> dh_prev(H, 0.0);
    for (int g = 0; g < 4; ++g) {
      for (int j = 0; j < H; ++j) {
        double a = da[g][j];
        if (a == 0.0) continue;
        double* wg = &grads.W[g][static_cast<std::size_t>(j) * I];
        for (int k = 0; k < I; ++k) wg[k] += a * x[k];
        if (h_prev) {
          double* ug = &grads.U[g][static_cast<std::size_t>(j) * H];
          for (int k = 0; k < H; ++k) ug[k] += a * (*h_prev)[k];
        }
        grads.b[g][j] += a;
        const double* wrow = &l.W[g][static_cast<std::size_t>(j) * I];
        for (int k = 0; k < I; ++k) dx[ti][k] += wrow[k] * a;
        const double* urow = &l.U[g][static_cast<std::size_t>(j) * H];
        for (int k = 0; k < H; ++k) dh_prev[k] += urow[k] * a;
      }
    }
    dh = std::move(dh_prev);
  }
  return dx;
}

struct ForwardTrace {
  LayerTrace l1, l2;
  double y_std = 0.0;
};

inline std::vector<std::vector<double>> standardized_window(
    const Scaler& scaler, const std::vector<FeatureRow>& window) {
  std::vector<std::vector<double>> rows(window.size(),
                                        std::vector<double>(kFeatures));
  for (std::size_t t = 0; t < window.size(); ++t)
    for (int f = 0; f < kFeatures; ++f)
      rows[t][f] = standardize(scaler, f, window[t][f]);
  return rows;
}

inline void forward_std(const LstmParams& p,
                        const std::vector<std::vector<double>>& std_rows,
                        ForwardTrace& trace) {
  lstm_layer_forward(p.l1, std_rows, trace.l1);
  lstm_layer_forward(p.l2, trace.l1.h, trace.l2);
  const auto& h_last = trace.l2.h.back();
  double y = p.head_b[0];
  for (std::size_t k = 0; k < p.head_w.size(); ++k)
    y += p.head_w[k] * h_last[k];
  trace.y_std = y;
}

// Allocation-light forward that only produces the output value; used by the
// finite-difference loop, which evaluates the network thousands of times.
class LeanForward {
public:
  explicit LeanForward(const LstmParams& p)
      : h1_(p.l1.hidden_size),
        c1_(p.l1.hidden_size),
        h2_(p.l2.hidden_size),
        c2_(p.l2.hidden_size) {}

  double operator()(const LstmParams& p,
                    const std::vector<std::vector<double>>& rows) {
    std::fill(h1_.begin(), h1_.end(), 0.0);
    std::fill(c1_.begin(), c1_.end(), 0.0);
    std::fill(h2_.begin(), h2_.end(), 0.0);
    std::fill(c2_.begin(), c2_.end(), 0.0);
    for (const auto& x : rows) {
      step(p.l1, x, h1_, c1_);
      step(p.l2, h1_, h2_, c2_);
    }
    double y = p.head_b[0];
    for (std::size_t k = 0; k < p.head_w.size(); ++k) y += p.head_w[k] * h2_[k];
    return y;
  }

private:
  // One time step; h and c update in place after all units read the
  // previous h. The four gate accumulators share each load of x and h.
  void step(const LstmLayerParams& l, const std::vector<double>& x,
            std::vector<double>& h, std::vector<double>& c) {
    const int H = l.hidden_size;
    const int I = l.input_size;
    tmp_h_.resize(static_cast<std::size_t>(H));
    for (int j = 0; j < H; ++j) {
      double a0 = l.b[0][j], a1 = l.b[1][j], a2 = l.b[2][j], a3 = l.b[3][j];
      const std::size_t row = static_cast<std::size_t>(j);
      const double* w0 = &l.W[0][row * I];
      const double* w1 = &l.W[1][row * I];
      const double* w2 = &l.W[2][row * I];
      const double* w3 = &l.W[3][row * I];
      for (int k = 0; k < I; ++k) {
        double xk = x[k];
        a0 += w0[k] * xk;
        a1 += w1[k] * xk;
        a2 += w2[k] * xk;
        a3 += w3[k] * xk;
      }
      const double* u0 = &l.U[0][row * H];
      const double* u1 = &l.U[1][row * H];
      const double* u2 = &l.U[2][row * H];
      const double* u3 = &l.U[3][row * H];
      for (int k = 0; k < H; ++k) {
        double hk = h[k];
        a0 += u0[k] * hk;
        a1 += u1[k] * hk;
        a2 += u2[k] * hk;
        a3 += u3[k] * hk;
      }
      double i = sigmoid(a0);
      double f = sigmoid(a1);
      double g_ = std::tanh(a2);
      double o = sigmoid(a3);
      double cj = f * c[j] + i * g_;
      c[j] = cj;
      tmp_h_[j] = o * std::tanh(cj);
    }
    h = tmp_h_;
  }

  std::vector<double> h1_, c1_, h2_, c2_, tmp_h_;
};

}  // namespace detail

// Predict next-interval total memory from a 20-row window of
// (total_mem_mib, pod_count). Deterministic; output clamped at 0.
inline ForecastResult forward(const LstmParams& params, const Scaler& scaler,
                              const std::vector<FeatureRow>& window) {
  if (static_cast<int>(window.size()) != kLookback)
    throw BadWindowLength("forward: window must have exactly 20 rows");
  detail::ForwardTrace trace;
  detail::forward_std(params, detail::standardized_window(scaler, window),
                      trace);
  ForecastResult r;
  r.predicted_total_mem_mib =
      std::max(0.0, destandardize(scaler, 0, trace.y_std));
  return r;
}

struct TrainSample {
  std::vector<FeatureRow> window;  // kLookback rows
  double next_total_mem_mib = 0.0;
};

// Squared error in standardized space for one sample, and its gradient.
inline double analytic_gradient(const LstmParams& params, const Scaler& scaler,
                                const TrainSample& sample, LstmParams& grads) {
  if (static_cast<int>(sample.window.size()) != kLookback)
    throw BadWindowLength("analytic_gradient: window must have 20 rows");
  detail::ForwardTrace trace;
  auto rows = detail::standardized_window(scaler, sample.window);
  detail::forward_std(params, rows, trace);
  double target = standardize(scaler, 0, sample.next_total_mem_mib);
  double err = trace.y_std - target;
  double loss = err * err;
  double dy = 2.0 * err;

  const std::size_t T = rows.size();
  const int H2 = params.l2.hidden_size;
  for (int k = 0; k < H2; ++k)
    grads.head_w[k] += dy * trace.l2.h.back()[k];
  grads.head_b[0] += dy;

  std::vector<std::vector<double>> dh2(T, std::vector<double>(H2, 0.0));
  for (int k = 0; k < H2; ++k) dh2[T - 1][k] = dy * params.head_w[k];
  auto dh1 = detail::lstm_layer_backward(params.l2, trace.l2, dh2, grads.l2);
  detail::lstm_layer_backward(params.l1, trace.l1, dh1, grads.l1);
  return loss;
}

// Same loss recomputed with central differences (step 1e-5) for every
// parameter; the independent side of the gradient check.
inline LstmParams finite_diff_gradient(const LstmParams& params,
                                       const Scaler& scaler,
                                       const TrainSample& sample,
                                       double step = 1e-5) {
  LstmParams fd(params.l1.hidden_size, params.l2.hidden_size);
  LstmParams work = params;
  double target = standardize(scaler, 0, sample.next_total_mem_mib);
  auto rows = detail::standardized_window(scaler, sample.window);
  detail::LeanForward eval(params);
  auto loss_at = [&]() {
    double err = eval(work, rows) - target;
    return err * err;
  };
  std::vector<std::vector<double>*> fd_tensors, work_tensors;
  for_each_tensor(fd, [&](const std::string&, std::vector<double>& v) {
    fd_tensors.push_back(&v);
  });
  for_each_tensor(work, [&](const std::string&, std::vector<double>& v) {
    work_tensors.push_back(&v);
  });
  for (std::size_t ti = 0; ti < work_tensors.size(); ++ti) {
    auto& wv = *work_tensors[ti];
    auto& gv = *fd_tensors[ti];
    for (std::size_t i = 0; i < wv.size(); ++i) {
      double orig = wv[i];
      wv[i] = orig + step;
      double up = loss_at();
      wv[i] = orig - step;
      double down = loss_at();
      wv[i] = orig;
      gv[i] = (up - down) / (2.0 * step);
    }
  }
  return fd;
}

// Entries where both sides are tiny count as zero error. The floor must sit
// above the absolute noise of central differences in double precision
// (~machine epsilon * loss / (2 * step) ~ 5e-12): parameters whose gradient
// has vanished through 20 forget gates otherwise compare FD noise against
// numbers like 1e-8 and report spurious mismatches.
inline constexpr double kGradCompareFloor = 1e-6;

inline double relative_error(double a, double b) {
  double scale = std::max(std::abs(a), std::abs(b));
  if (scale < kGradCompareFloor) return 0.0;
  return std::abs(a - b) / scale;
}

// Worst relative error between analytic and finite-difference gradients
// over every parameter of the model.
inline double grad_check(const LstmParams& params, const Scaler& scaler,
                         const TrainSample& sample) {
  LstmParams analytic(params.l1.hidden_size, params.l2.hidden_size);
  analytic_gradient(params, scaler, sample, analytic);
  LstmParams fd = finite_diff_gradient(params, scaler, sample);
  double worst = 0.0;
  std::vector<const std::vector<double>*> av, fv;
  for_each_tensor(analytic, [&](const std::string&, std::vector<double>& v) {
    av.push_back(&v);
  });
  for_each_tensor(fd, [&](const std::string&, std::vector<double>& v) {
    fv.push_back(&v);
  });
  for (std::size_t t = 0; t < av.size(); ++t)
    for (std::size_t i = 0; i < av[t]->size(); ++i)
      worst = std::max(worst, relative_error((*av[t])[i], (*fv[t])[i]));
  return worst;
}

namespace detail {

inline double clip_gradient_norm(LstmParams& grads, double max_norm) {
  double sq = 0.0;
  for_each_tensor(grads, [&](const std::string&, std::vector<double>& v) {
    for (double x : v) sq += x * x;
  });
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double scale = max_norm / norm;
    for_each_tensor(grads, [&](const std::string&, std::vector<double>& v) {
      for (double& x : v) x *= scale;
    });
  }
  return norm;
}

inline void apply_step(LstmParams& params, LstmParams& grads, double lr) {
  std::vector<std::vector<double>*> pv, gv;
  for_each_tensor(params, [&](const std::string&, std::vector<double>& v) {
    pv.push_back(&v);
  });
  for_each_tensor(grads, [&](const std::string&, std::vector<double>& v) {
    gv.push_back(&v);
  });
  for (std::size_t t = 0; t < pv.size(); ++t)
    for (std::size_t i = 0; i < pv[t]->size(); ++i)
      (*pv[t])[i] -= lr * (*gv[t])[i];
}

}  // namespace detail

// Mean squared error over the dataset in standardized space.
inline double dataset_loss(const LstmParams& params, const Scaler& scaler,
                           const std::vector<TrainSample>& dataset) {
  double total = 0.0;
  for (const auto& s : dataset) {
    detail::ForwardTrace trace;
    detail::forward_std(params, detail::standardized_window(scaler, s.window),
                        trace);
    double err = trace.y_std - standardize(scaler, 0, s.next_total_mem_mib);
    total += err * err;
  }
  return total / static_cast<double>(dataset.size());
}

// One gradient-descent update per sample, fixed dataset order, `epochs` full
// sweeps. epoch_losses (when given) records the dataset MSE after each
// sweep.
inline LstmParams train(LstmParams params, const Scaler& scaler,
                        const std::vector<TrainSample>& dataset, int epochs,
                        double lr, std::vector<double>* epoch_losses = nullptr) {
  if (dataset.empty()) throw EmptyDataset("train: empty dataset");
  for (const auto& s : dataset)
    if (static_cast<int>(s.window.size()) != kLookback)
      throw BadWindowLength("train: window must have 20 rows");
  for (int e = 0; e < epochs; ++e) {
    for (const auto& s : dataset) {
      LstmParams grads(params.l1.hidden_size, params.l2.hidden_size);
      analytic_gradient(params, scaler, s, grads);
      detail::clip_gradient_norm(grads, kGradClipNorm);
      detail::apply_step(params, grads, lr);
    }
    if (epoch_losses)
      epoch_losses->push_back(dataset_loss(params, scaler, dataset));
  }
  return params;
}

// Mean absolute percentage error; terms with |actual| < 1 MiB are skipped.
inline double mape(const std::vector<double>& predictions,
                   const std::vector<double>& actuals) {
  if (predictions.empty() || predictions.size() != actuals.size())
    throw EmptyDataset("mape: inputs must be non-empty and equal length");
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (std::abs(actuals[i]) < 1.0) continue;
    sum += std::abs(predictions[i] - actuals[i]) / std::abs(actuals[i]);
    ++n;
  }
  if (n == 0) return 0.0;
  return sum / n * 100.0;
}

// clamp(1 - mape/100, 0, 1)
inline double confidence(double recent_residual_mape_pct) {
  return std::clamp(1.0 - recent_residual_mape_pct / 100.0, 0.0, 1.0);
}

}  // namespace nimbus::forecast
