#ifndef MIRA_POLICY_HPP_
#define MIRA_POLICY_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "mira/types.hpp"

namespace mira {

enum class PolicyKind : std::uint8_t { kTabular, kNetwork };

struct PolicyShape {
  PolicyKind kind = PolicyKind::kTabular;
  int n_features = 0;
  int n_actions = 0;
  int hidden = 64;
  int active_features = 1;  // typical count of active inputs, for init scaling

  friend bool operator==(const PolicyShape&, const PolicyShape&) = default;
};

/// Cached activations of one forward pass.
struct Forward {
  std::vector<double> logits;
  double value = 0.0;
  std::vector<double> h1;
  std::vector<double> h2;
};

/// Actor-critic over sparse one-hot inputs. Tabular: a logit row and a value
/// per feature, summed over active features. Network: two tanh layers of
/// `hidden` units shared by a logit head and a value head.
class Policy {
 public:
  Policy() = default;
  Policy(PolicyShape shape, std::uint64_t seed);

  const PolicyShape& shape() const { return shape_; }
  std::vector<double>& params() { return theta_; }
  const std::vector<double>& params() const { return theta_; }
  size_t size() const { return theta_.size(); }

  /// Throws std::invalid_argument on an out-of-range feature index.
  Forward forward(std::span<const std::int32_t> features) const;
  /// Accumulates d(loss)/d(theta) into grad given d(loss)/d(logits) and
  /// d(loss)/d(value).
  void backward(std::span<const std::int32_t> features, const Forward& f,
                std::span<const double> dlogits, double dvalue, std::vector<double>& grad) const;

  friend bool operator==(const Policy&, const Policy&) = default;

 private:
  PolicyShape shape_;
  std::vector<double> theta_;
};

/// Softmax of logits minus an optional per-action penalty (empty = none).
std::vector<double> action_probs(std::span<const double> logits, std::span<const double> penalty);
double log_softmax_at(std::span<const double> logits, std::span<const double> penalty, int a);

/// Lowest probability a penalty of at most `cap` leaves any action when the
/// unpenalized logits are uniform. In general p_pen(a) >= p(a) * exp(-cap).
double penalty_floor(double cap, int n_actions);

struct ActResult {
  int action = 0;
  double log_prob = 0.0;
  double value = 0.0;
};

ActResult act(const Policy& policy, std::span<const std::int32_t> features,
              std::span<const double> penalty, Rng& rng);
int greedy_action(const Policy& policy, std::span<const std::int32_t> features);

}  // namespace mira

#endif  // MIRA_POLICY_HPP_
