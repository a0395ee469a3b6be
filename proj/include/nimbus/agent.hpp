#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nimbus/rng.hpp"

// Dueling DQN over the 4-D state vector [predicted mem util %, cpu util %,
// mem util %, replica count] with a shared 4->64->64 ReLU trunk, a value
// head and a mean-centered advantage head, experience replay and a hard
// target-network sync. All arithmetic is explicit so gradients can be
// validated against finite differences.

namespace nimbus::rl {

struct InsufficientExperiences : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StateVector {
  double s1_pred_mem_pct = 0.0;
  double s2_cpu_pct = 0.0;
  double s3_mem_pct = 0.0;
  double s4_replicas = 1.0;
};

enum class ScalingAction { ScaleDown = 0, KeepSame = 1, ScaleUp = 2 };

inline constexpr int kNumActions = 3;

inline int action_delta(ScalingAction a) {
  return static_cast<int>(a) - 1;  // -1 / 0 / +1
}

inline ScalingAction action_from_index(int idx) {
  return static_cast<ScalingAction>(idx);
}

inline const char* action_name(ScalingAction a) {
  switch (a) {
    case ScalingAction::ScaleDown: return "scale_down";
    case ScalingAction::KeepSame: return "keep_same";
    case ScalingAction::ScaleUp: return "scale_up";
  }
  return "?";
}

inline constexpr int kStateDim = 4;

struct DqnParams {
  int hidden = 64;
  double replica_norm = 10.0;  // s4 is divided by this (max replicas)
  std::vector<double> w1, b1;  // hidden x 4, hidden
  std::vector<double> w2, b2;  // hidden x hidden, hidden
  std::vector<double> wv, bv;  // 1 x hidden, 1
  std::vector<double> wa, ba;  // 3 x hidden, 3

  explicit DqnParams(int hidden_units = 64) : hidden(hidden_units) {
    w1.assign(static_cast<std::size_t>(hidden) * kStateDim, 0.0);
    b1.assign(static_cast<std::size_t>(hidden), 0.0);
    w2.assign(static_cast<std::size_t>(hidden) * hidden, 0.0);
    b2.assign(static_cast<std::size_t>(hidden), 0.0);
    wv.assign(static_cast<std::size_t>(hidden), 0.0);
    bv.assign(1, 0.0);
    wa.assign(static_cast<std::size_t>(kNumActions) * hidden, 0.0);
    ba.assign(kNumActions, 0.0);
  }
};

template <typename P, typename Fn>
void for_each_dqn_tensor(P& p, Fn&& fn) {
  fn(std::string("trunk.W1"), p.w1);
  fn(std::string("trunk.b1"), p.b1);
  fn(std::string("trunk.W2"), p.w2);
  fn(std::string("trunk.b2"), p.b2);
  fn(std::string("value.W"), p.wv);
  fn(std::string("value.b"), p.bv);
  fn(std::string("adv.W"), p.wa);
  fn(std::string("adv.b"), p.ba);
}

inline DqnParams init_dqn(std::uint64_t seed, int hidden = 64,
                          double replica_norm = 10.0) {
  DqnParams p(hidden);
  p.replica_norm = replica_norm;
  SplitMix64 rng(seed);
  auto fill = [&](std::vector<double>& v, int fan_in) {
    double k = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& x : v) x = rng.uniform(-k, k);
  };
  fill(p.w1, kStateDim);
  fill(p.w2, hidden);
  fill(p.wv, hidden);
  fill(p.wa, hidden);
  return p;
}

inline std::array<double, kStateDim> normalize_state(const DqnParams& p,
                                                     const StateVector& s) {
  return {s.s1_pred_mem_pct / 100.0, s.s2_cpu_pct / 100.0,
          s.s3_mem_pct / 100.0, s.s4_replicas / p.replica_norm};
}

namespace detail {

struct DqnTrace {
  std::array<double, kStateDim> x{};
  std::vector<double> z1, a1;  // pre/post ReLU layer 1
  std::vector<double> z2, a2;  // pre/post ReLU layer 2
  double v = 0.0;
  std::array<double, kNumActions> adv{};
  std::array<double, kNumActions> q{};
};

inline void dqn_forward(const DqnParams& p, const StateVector& s,
                        DqnTrace& t) {
  const int H = p.hidden;
  t.x = normalize_state(p, s);
  t.z1.assign(H, 0.0);
  t.a1.assign(H, 0.0);
  for (int j = 0; j < H; ++j) {
    double acc = p.b1[j];
    const double* row = &p.w1[static_cast<std::size_t>(j) * kStateDim];
    for (int k = 0; k < kStateDim; ++k) acc += row[k] * t.x[k];
    t.z1[j] = acc;
    t.a1[j] = acc > 0.0 ? acc : 0.0;
  }
  t.z2.assign(H, 0.0);
  t.a2.assign(H, 0.0);
  for (int j = 0; j < H; ++j) {
    double acc = p.b2[j];
    const double* row = &p.w2[static_cast<std::size_t>(j) * H];
    for (int k = 0; k < H; ++k) acc += row[k] * t.a1[k];
    t.z2[j] = acc;
    t.a2[j] = acc > 0.0 ? acc : 0.0;
  }
  double v = p.bv[0];
  for (int k = 0; k < H; ++k) v += p.wv[k] * t.a2[k];
  t.v = v;
  double adv_mean = 0.0;
  for (int a = 0; a < kNumActions; ++a) {
    double acc = p.ba[a];
    const double* row = &p.wa[static_cast<std::size_t>(a) * H];
    for (int k = 0; k < H; ++k) acc += row[k] * t.a2[k];
    t.adv[a] = acc;
    adv_mean += acc;
  }
  adv_mean /= kNumActions;
  for (int a = 0; a < kNumActions; ++a) t.q[a] = v + t.adv[a] - adv_mean;
}

}  // namespace detail

// Q(s, a) = V(s) + A(s, a) - mean_a' A(s, a'); invariant under uniform
// shifts of the advantage head.
inline std::array<double, kNumActions> q_values(const DqnParams& p,
                                                const StateVector& s) {
  detail::DqnTrace t;
  detail::dqn_forward(p, s, t);
  return t.q;
}

// Greedy ties resolve toward KeepSame, then the lower index.
inline ScalingAction greedy_action(const std::array<double, kNumActions>& q) {
  double best = *std::max_element(q.begin(), q.end());
  if (q[static_cast<int>(ScalingAction::KeepSame)] == best)
    return ScalingAction::KeepSame;
  for (int a = 0; a < kNumActions; ++a)
    if (q[a] == best) return action_from_index(a);
  return ScalingAction::KeepSame;
}

inline ScalingAction select_action(const DqnParams& p, const StateVector& s,
                                   double epsilon, SplitMix64& rng) {
  if (epsilon > 0.0 && rng.uniform() < epsilon)
    return action_from_index(static_cast<int>(rng.uniform_int(kNumActions)));
  return greedy_action(q_values(p, s));
}

struct Experience {
  StateVector state;
  ScalingAction action = ScalingAction::KeepSame;
  double reward = 0.0;
  StateVector next_state;
  bool done = false;
};

// Ring buffer, FIFO eviction at capacity, uniform sampling without
// replacement.
class ReplayBuffer {
public:
  explicit ReplayBuffer(std::size_t capacity = 10000) : capacity_(capacity) {}

  void push(const Experience& e) {
    if (items_.size() < capacity_) {
      items_.push_back(e);
    } else {
      items_[head_] = e;
      head_ = (head_ + 1) % capacity_;
    }
    ++inserted_;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }

  // Oldest-first access by logical position (0 = oldest surviving).
  const Experience& at(std::size_t logical) const {
    return items_[(head_ + logical) % items_.size()];
  }

  std::vector<Experience> sample(std::size_t batch, SplitMix64& rng) const {
    if (items_.size() < batch)
      throw InsufficientExperiences("replay buffer smaller than batch");
    std::vector<std::size_t> idx(items_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<Experience> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      std::size_t j = i + rng.uniform_int(idx.size() - i);
      std::swap(idx[i], idx[j]);
      out.push_back(items_[idx[i]]);
    }
    return out;
  }

private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // index of oldest element once full
  std::uint64_t inserted_ = 0;
  std::vector<Experience> items_;
};

inline constexpr double kHuberDelta = 1.0;
inline constexpr double kDqnGradClipNorm = 10.0;

inline double huber(double e, double delta = kHuberDelta) {
  double a = std::abs(e);
  if (a <= delta) return 0.5 * e * e;
  return delta * (a - 0.5 * delta);
}

// TD targets from the frozen target network: y = r for terminal experiences,
// else r + gamma * max_a' Q_target(s', a').
inline std::vector<double> td_targets(const DqnParams& target,
                                      const std::vector<Experience>& batch,
                                      double gamma) {
  std::vector<double> ys;
  ys.reserve(batch.size());
  for (const auto& e : batch) {
    double y = e.reward;
    if (!e.done) {
      auto qn = q_values(target, e.next_state);
      y += gamma * *std::max_element(qn.begin(), qn.end());
    }
    ys.push_back(y);
  }
  return ys;
}

// Mean Huber loss of Q_main(s, a) against fixed targets y.
inline double td_loss(const DqnParams& main,
                      const std::vector<Experience>& batch,
                      const std::vector<double>& ys) {
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto q = q_values(main, batch[i].state);
    total += huber(ys[i] - q[static_cast<int>(batch[i].action)]);
  }
  return total / static_cast<double>(batch.size());
}

// Analytic gradient of td_loss w.r.t. the main network; accumulated into
// `grads` (pre-zeroed, same shapes).
inline double td_gradient(const DqnParams& main,
                          const std::vector<Experience>& batch,
                          const std::vector<double>& ys, DqnParams& grads) {
  const int H = main.hidden;
  double total = 0.0;
  const double invn = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    detail::DqnTrace t;
    detail::dqn_forward(main, batch[i].state, t);
    int a = static_cast<int>(batch[i].action);
    double err = ys[i] - t.q[a];
    total += huber(err);
    // d huber(y - q)/dq = -clamp(err, -delta, +delta)
    double dq = -std::clamp(err, -kHuberDelta, kHuberDelta) * invn;

    // Through the dueling combination.
    double dv = dq;
    std::array<double, kNumActions> dadv{};
    for (int j = 0; j < kNumActions; ++j)
      dadv[j] = dq * ((j == a ? 1.0 : 0.0) - 1.0 / kNumActions);

    std::vector<double> da2(H, 0.0);
    grads.bv[0] += dv;
    for (int k = 0; k < H; ++k) {
      grads.wv[k] += dv * t.a2[k];
      da2[k] += dv * main.wv[k];
    }
    for (int j = 0; j < kNumActions; ++j) {
      grads.ba[j] += dadv[j];
      double* wrow = &grads.wa[static_cast<std::size_t>(j) * H];
      const double* mrow = &main.wa[static_cast<std::size_t>(j) * H];
      for (int k = 0; k < H; ++k) {
        wrow[k] += dadv[j] * t.a2[k];
        da2[k] += dadv[j] * mrow[k];
      }
    }
    std::vector<double> da1(H, 0.0);
    for (int j = 0; j < H; ++j) {
      if (t.z2[j] <= 0.0) continue;
      double dz = da2[j];
      grads.b2[j] += dz;
      double* wrow = &grads.w2[static_cast<std::size_t>(j) * H];
      const double* mrow = &main.w2[static_cast<std::size_t>(j) * H];
      for (int k = 0; k < H; ++k) {
        wrow[k] += dz * t.a1[k];
        da1[k] += dz * mrow[k];
      }
    }
    for (int j = 0; j < H; ++j) {
      if (t.z1[j] <= 0.0) continue;
      double dz = da1[j];
      grads.b1[j] += dz;
      double* wrow = &grads.w1[static_cast<std::size_t>(j) * kStateDim];
      for (int k = 0; k < kStateDim; ++k) wrow[k] += dz * t.x[k];
    }
  }
  return total * invn;
}

namespace detail {

inline void clip_dqn_norm(DqnParams& grads, double max_norm) {
  double sq = 0.0;
  for_each_dqn_tensor(grads, [&](const std::string&, std::vector<double>& v) {
    for (double x : v) sq += x * x;
  });
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double scale = max_norm / norm;
    for_each_dqn_tensor(grads,
                        [&](const std::string&, std::vector<double>& v) {
                          for (double& x : v) x *= scale;
                        });
  }
}

}  // namespace detail

struct TrainStepResult {
  DqnParams params;
  double loss = 0.0;
};

// One clipped gradient step on the mean Huber TD loss. Returns the updated
// main network and the pre-update loss.
inline TrainStepResult td_train_step(const DqnParams& main,
                                     const DqnParams& target,
                                     const std::vector<Experience>& batch,
                                     double gamma = 0.99, double lr = 0.001) {
  auto ys = td_targets(target, batch, gamma);
  DqnParams grads(main.hidden);
  double loss = td_gradient(main, batch, ys, grads);
  detail::clip_dqn_norm(grads, kDqnGradClipNorm);
  TrainStepResult out{main, loss};
  std::vector<std::vector<double>*> pv, gv;
  for_each_dqn_tensor(out.params,
                      [&](const std::string&, std::vector<double>& v) {
                        pv.push_back(&v);
                      });
  for_each_dqn_tensor(grads, [&](const std::string&, std::vector<double>& v) {
    gv.push_back(&v);
  });
  for (std::size_t t = 0; t < pv.size(); ++t)
    for (std::size_t i = 0; i < pv[t]->size(); ++i)
      (*pv[t])[i] -= lr * (*gv[t])[i];
  return out;
}

inline DqnParams sync_target(const DqnParams& main) { return main; }

// The TD loss is piecewise smooth: ReLU pre-activations and the Huber
// residual have kinks where the gradient does not exist, and finite
// differences straddling a kink measure nothing. Reports the smallest
// margin from any kink for a batch so callers can test at smooth points.
inline double kink_margin(const DqnParams& main,
                          const std::vector<Experience>& batch,
                          const std::vector<double>& ys) {
  double margin = 1e300;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    detail::DqnTrace t;
    detail::dqn_forward(main, batch[i].state, t);
    for (double z : t.z1) margin = std::min(margin, std::abs(z));
    for (double z : t.z2) margin = std::min(margin, std::abs(z));
    double e = ys[i] - t.q[static_cast<int>(batch[i].action)];
    margin = std::min(margin, std::abs(std::abs(e) - kHuberDelta));
  }
  return margin;
}

// Finite-difference check of td_gradient on a small batch (targets frozen).
inline double dqn_grad_check(const DqnParams& main, const DqnParams& target,
                             const std::vector<Experience>& batch,
                             double gamma = 0.99, double step = 1e-5) {
  auto ys = td_targets(target, batch, gamma);
  DqnParams analytic(main.hidden);
  td_gradient(main, batch, ys, analytic);
  DqnParams work = main;
  DqnParams fd(main.hidden);
  std::vector<std::vector<double>*> wv, fv, av;
  for_each_dqn_tensor(work, [&](const std::string&, std::vector<double>& v) {
    wv.push_back(&v);
  });
  for_each_dqn_tensor(fd, [&](const std::string&, std::vector<double>& v) {
    fv.push_back(&v);
  });
  for_each_dqn_tensor(analytic,
                      [&](const std::string&, std::vector<double>& v) {
                        av.push_back(&v);
                      });
  double worst = 0.0;
  for (std::size_t t = 0; t < wv.size(); ++t) {
    for (std::size_t i = 0; i < wv[t]->size(); ++i) {
      double orig = (*wv[t])[i];
      (*wv[t])[i] = orig + step;
      double up = td_loss(work, batch, ys);
      (*wv[t])[i] = orig - step;
      double down = td_loss(work, batch, ys);
      (*wv[t])[i] = orig;
      double numeric = (up - down) / (2.0 * step);
      double analytic_v = (*av[t])[i];
      double scale = std::max(std::abs(numeric), std::abs(analytic_v));
      // Same both-tiny rule as the LSTM check: below the FD noise floor
      // the comparison is meaningless.
      if (scale >= 1e-6)
        worst = std::max(worst, std::abs(numeric - analytic_v) / scale);
    }
  }
  return worst;
}

// Owns the main/target pair, the replay buffer and the update cadence:
// batch 32, hard target sync every 100 train steps.
class AgentTrainer {
public:
  AgentTrainer(DqnParams params, std::uint64_t rng_seed, double gamma = 0.99,
               double lr = 0.001, std::size_t batch_size = 32,
               int sync_every = 100, std::size_t buffer_capacity = 10000)
      : main_(params),
        target_(params),
        buffer_(buffer_capacity),
        rng_(rng_seed),
        gamma_(gamma),
        lr_(lr),
        batch_size_(batch_size),
        sync_every_(sync_every) {}

  const DqnParams& main() const { return main_; }
  const DqnParams& target() const { return target_; }
  ReplayBuffer& buffer() { return buffer_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  SplitMix64& rng() { return rng_; }
  int train_steps() const { return train_steps_; }
  int syncs() const { return syncs_; }

  void observe(const Experience& e) { buffer_.push(e); }

  bool can_train() const { return buffer_.size() >= batch_size_; }

  // One TD step when enough experience exists; hard-syncs the target
  // network every sync_every steps. Returns the step loss, if trained.
  std::optional<double> maybe_train() {
    if (!can_train()) return std::nullopt;
    auto batch = buffer_.sample(batch_size_, rng_);
    auto res = td_train_step(main_, target_, batch, gamma_, lr_);
    main_ = std::move(res.params);
    ++train_steps_;
    if (train_steps_ % sync_every_ == 0) {
      target_ = sync_target(main_);
      ++syncs_;
    }
    return res.loss;
  }

private:
  DqnParams main_;
  DqnParams target_;
  ReplayBuffer buffer_;
  SplitMix64 rng_;
  double gamma_;
  double lr_;
  std::size_t batch_size_;
  int sync_every_;
  int train_steps_ = 0;
  int syncs_ = 0;
};

}  // namespace nimbus::rl
