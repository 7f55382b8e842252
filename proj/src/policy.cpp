#include "mira/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mira {

namespace {

// Offsets of the network blocks inside theta.
struct Layout {
  size_t w1, b1, w2, b2, wp, bp, wv, bv, total;
};

Layout network_layout(const PolicyShape& s) {
  const size_t F = static_cast<size_t>(s.n_features);
  const size_t H = static_cast<size_t>(s.hidden);
  const size_t A = static_cast<size_t>(s.n_actions);
  Layout l{};
  l.w1 = 0;
  l.b1 = l.w1 + F * H;
  l.w2 = l.b1 + H;
  l.b2 = l.w2 + H * H;
  l.wp = l.b2 + H;
  l.bp = l.wp + H * A;
  l.wv = l.bp + A;
  l.bv = l.wv + H;
  l.total = l.bv + 1;
  return l;
}

}  // namespace

Policy::Policy(PolicyShape shape, std::uint64_t seed) : shape_(shape) {
  if (shape.n_features <= 0 || shape.n_actions <= 1) {
    throw std::invalid_argument("policy: need features > 0 and at least two actions");
  }
  const size_t F = static_cast<size_t>(shape.n_features);
  const size_t A = static_cast<size_t>(shape.n_actions);
  if (shape.kind == PolicyKind::kTabular) {
    theta_.assign(F * A + F, 0.0);
    return;
  }
  if (shape.hidden <= 0) throw std::invalid_argument("policy: hidden width must be positive");
  const Layout l = network_layout(shape);
  theta_.assign(l.total, 0.0);
  Rng rng(derive_seed(seed, 0x706f6c));
  const double H = static_cast<double>(shape.hidden);
  auto fill = [&](size_t from, size_t to, double stddev) {
    for (size_t i = from; i < to; ++i) theta_[i] = rng.normal() * stddev;
  };
  fill(l.w1, l.b1, 1.0 / std::sqrt(static_cast<double>(std::max(1, shape.active_features))));
  fill(l.w2, l.b2, 1.0 / std::sqrt(H));
  fill(l.wp, l.bp, 0.01 / std::sqrt(H));
  fill(l.wv, l.bv, 1.0 / std::sqrt(H));
}

Forward Policy::forward(std::span<const std::int32_t> features) const {
  const int A = shape_.n_actions;
  for (auto f : features) {
    if (f < 0 || f >= shape_.n_features) throw std::invalid_argument("policy: feature index out of range");
  }
  Forward out;
  out.logits.assign(static_cast<size_t>(A), 0.0);
  if (shape_.kind == PolicyKind::kTabular) {
    const size_t voff = static_cast<size_t>(shape_.n_features) * static_cast<size_t>(A);
    for (auto f : features) {
      const size_t row = static_cast<size_t>(f) * static_cast<size_t>(A);
      for (int a = 0; a < A; ++a) out.logits[static_cast<size_t>(a)] += theta_[row + static_cast<size_t>(a)];
      out.value += theta_[voff + static_cast<size_t>(f)];
    }
    return out;
  }
  const Layout l = network_layout(shape_);
  const size_t H = static_cast<size_t>(shape_.hidden);
  out.h1.assign(theta_.begin() + static_cast<std::ptrdiff_t>(l.b1),
                theta_.begin() + static_cast<std::ptrdiff_t>(l.b1 + H));
  for (auto f : features) {
    const double* w = &theta_[l.w1 + static_cast<size_t>(f) * H];
    for (size_t j = 0; j < H; ++j) out.h1[j] += w[j];
  }
  for (auto& h : out.h1) h = std::tanh(h);
  out.h2.assign(theta_.begin() + static_cast<std::ptrdiff_t>(l.b2),
                theta_.begin() + static_cast<std::ptrdiff_t>(l.b2 + H));
  for (size_t i = 0; i < H; ++i) {
    const double* w = &theta_[l.w2 + i * H];
    const double x = out.h1[i];
    for (size_t j = 0; j < H; ++j) out.h2[j] += w[j] * x;
  }
  for (auto& h : out.h2) h = std::tanh(h);
  for (int a = 0; a < A; ++a) out.logits[static_cast<size_t>(a)] = theta_[l.bp + static_cast<size_t>(a)];
  out.value = theta_[l.bv];
  for (size_t i = 0; i < H; ++i) {
    const double x = out.h2[i];
    const double* w = &theta_[l.wp + i * static_cast<size_t>(A)];
    for (int a = 0; a < A; ++a) out.logits[static_cast<size_t>(a)] += w[a] * x;
    out.value += theta_[l.wv + i] * x;
  }
  return out;
}

void Policy::backward(std::span<const std::int32_t> features, const Forward& f,
                      std::span<const double> dlogits, double dvalue,
                      std::vector<double>& grad) const {
  const size_t A = static_cast<size_t>(shape_.n_actions);
  if (grad.size() != theta_.size()) grad.assign(theta_.size(), 0.0);
  if (shape_.kind == PolicyKind::kTabular) {
    const size_t voff = static_cast<size_t>(shape_.n_features) * A;
    for (auto feat : features) {
      const size_t row = static_cast<size_t>(feat) * A;
      for (size_t a = 0; a < A; ++a) grad[row + a] += dlogits[a];
      grad[voff + static_cast<size_t>(feat)] += dvalue;
    }
    return;
  }
  const Layout l = network_layout(shape_);
  const size_t H = static_cast<size_t>(shape_.hidden);
  std::vector<double> dh2(H, 0.0);
  for (size_t i = 0; i < H; ++i) {
    const double x = f.h2[i];
    const double* w = &theta_[l.wp + i * A];
    double acc = theta_[l.wv + i] * dvalue;
    for (size_t a = 0; a < A; ++a) {
      grad[l.wp + i * A + a] += dlogits[a] * x;
      acc += w[a] * dlogits[a];
    }
    grad[l.wv + i] += dvalue * x;
    dh2[i] = acc * (1.0 - x * x);
  }
  for (size_t a = 0; a < A; ++a) grad[l.bp + a] += dlogits[a];
  grad[l.bv] += dvalue;
  std::vector<double> dh1(H, 0.0);
  for (size_t i = 0; i < H; ++i) {
    const double x = f.h1[i];
    const double* w = &theta_[l.w2 + i * H];
    double acc = 0.0;
    for (size_t j = 0; j < H; ++j) {
      grad[l.w2 + i * H + j] += dh2[j] * x;
      acc += w[j] * dh2[j];
    }
    dh1[i] = acc * (1.0 - x * x);
  }
  for (size_t j = 0; j < H; ++j) grad[l.b2 + j] += dh2[j];
  for (size_t j = 0; j < H; ++j) grad[l.b1 + j] += dh1[j];
  for (auto feat : features) {
    double* g = &grad[l.w1 + static_cast<size_t>(feat) * H];
    for (size_t j = 0; j < H; ++j) g[j] += dh1[j];
  }
}

std::vector<double> action_probs(std::span<const double> logits, std::span<const double> penalty) {
  std::vector<double> z(logits.begin(), logits.end());
  if (!penalty.empty()) {
    for (size_t i = 0; i < z.size(); ++i) z[i] -= penalty[i];
  }
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : z) v /= sum;
  return z;
}

double log_softmax_at(std::span<const double> logits, std::span<const double> penalty, int a) {
  double mx = -INFINITY;
  for (size_t i = 0; i < logits.size(); ++i) {
    mx = std::max(mx, logits[i] - (penalty.empty() ? 0.0 : penalty[i]));
  }
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    sum += std::exp(logits[i] - (penalty.empty() ? 0.0 : penalty[i]) - mx);
  }
  const size_t ai = static_cast<size_t>(a);
  return logits[ai] - (penalty.empty() ? 0.0 : penalty[ai]) - mx - std::log(sum);
}

double penalty_floor(double cap, int n_actions) {
  const double e = std::exp(-cap);
  return e / (e + static_cast<double>(n_actions - 1));
}

ActResult act(const Policy& policy, std::span<const std::int32_t> features,
              std::span<const double> penalty, Rng& rng) {
  const Forward f = policy.forward(features);
  const auto p = action_probs(f.logits, penalty);
  const double u = rng.uniform();
  double acc = 0.0;
  int chosen = static_cast<int>(p.size()) - 1;
  for (size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) {
      chosen = static_cast<int>(i);
      break;
    }
  }
  return {chosen, log_softmax_at(f.logits, penalty, chosen), f.value};
}

int greedy_action(const Policy& policy, std::span<const std::int32_t> features) {
  const Forward f = policy.forward(features);
  return static_cast<int>(std::max_element(f.logits.begin(), f.logits.end()) - f.logits.begin());
}

}  // namespace mira
