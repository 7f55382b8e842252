#ifndef MIRA_SHAPING_HPP_
#define MIRA_SHAPING_HPP_

#include <cstdint>
#include <span>
#include <vector>

namespace mira {

enum class DecayKind : std::uint8_t { kLinear, kExponential };

/// Weights of the shaped advantage eta * A + xi * scale * U over iterations.
///
/// eta ramps linearly from eta0 to 1. xi walks through `xi` (each value but
/// the last held for `xi_hold` iterations), then the last value decays to 0:
/// linearly by `horizon`, or geometrically with `rate` per iteration.
struct ShapingSchedule {
  double eta0 = 0.8;
  std::vector<double> xi = {0.0};
  double delta = 0.5;
  DecayKind decay = DecayKind::kExponential;
  std::int64_t horizon = 100;   // iterations; end of the linear decay
  std::int64_t eta_ramp = 25;   // iterations for eta to reach 1
  std::int64_t xi_hold = 0;     // iterations per non-final xi value
  double rate = 0.9;            // exponential decay factor per iteration
  double adv_floor = 0.05;      // lower bound on the batch mean |A| scale

  /// Throws ConfigError on delta >= 1, eta0 outside (0,1], xi0 > delta*eta0,
  /// an increasing xi list, or a non-positive horizon/rate.
  void validate() const;

  /// Exponential schedule whose last xi value halves every `half_life`
  /// iterations, with eta ramp and xi hold given as iteration counts.
  static ShapingSchedule exponential(double eta0, std::vector<double> xi, double delta,
                                     double half_life, std::int64_t eta_ramp,
                                     std::int64_t xi_hold);
  static ShapingSchedule linear(double eta0, std::vector<double> xi, double delta,
                                std::int64_t horizon);
};

struct ScheduleValue {
  double eta = 1.0;
  double xi = 0.0;

  double ratio() const { return xi / eta; }
};

ScheduleValue schedule_at(const ShapingSchedule& s, std::int64_t k);

/// GAE over one episode. `values` carries one bootstrap entry past the last
/// reward; a terminal episode passes 0 there.
std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        double gamma, double lambda);

struct AdvantageBatch {
  std::vector<double> advantages;  // A
  std::vector<double> utilities;   // U
  std::vector<double> shaped;      // A~
  double eta = 1.0;
  double xi = 0.0;
  double scale = 0.0;  // max(mean |A|, adv_floor)
};

/// A~_t = eta_k A_t + xi_k * max(mean|A|, floor) * U_t.
AdvantageBatch shaped_advantage(std::span<const double> advantages,
                                std::span<const double> utilities, const ShapingSchedule& s,
                                std::int64_t k);

}  // namespace mira

#endif  // MIRA_SHAPING_HPP_
