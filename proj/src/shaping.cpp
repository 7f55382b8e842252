#include "mira/shaping.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mira/types.hpp"

namespace mira {

void ShapingSchedule::validate() const {
  if (!(eta0 > 0.0 && eta0 <= 1.0)) throw ConfigError("shaping: eta0 must be in (0, 1]");
  if (!(delta >= 0.0 && delta < 1.0)) throw ConfigError("shaping: delta must be in [0, 1)");
  if (xi.empty()) throw ConfigError("shaping: xi0 needs at least one value");
  for (size_t i = 0; i < xi.size(); ++i) {
    if (!(xi[i] >= 0.0)) throw ConfigError("shaping: xi values must be >= 0");
    if (i > 0 && xi[i] > xi[i - 1]) throw ConfigError("shaping: xi values must be nonincreasing");
  }
  if (xi[0] > delta * eta0 + 1e-12) {
    throw ConfigError("shaping: xi0 = " + std::to_string(xi[0]) + " exceeds delta*eta0 = " +
                      std::to_string(delta * eta0));
  }
  if (horizon <= 0) throw ConfigError("shaping: horizon must be positive");
  if (eta_ramp < 0 || xi_hold < 0) throw ConfigError("shaping: ramp/hold must be >= 0");
  if (decay == DecayKind::kExponential && !(rate > 0.0 && rate < 1.0)) {
    throw ConfigError("shaping: exponential rate must be in (0, 1)");
  }
  if (!(adv_floor >= 0.0)) throw ConfigError("shaping: adv_floor must be >= 0");
}

ShapingSchedule ShapingSchedule::exponential(double eta0, std::vector<double> xi, double delta,
                                             double half_life, std::int64_t eta_ramp,
                                             std::int64_t xi_hold) {
  ShapingSchedule s;
  s.eta0 = eta0;
  s.xi = std::move(xi);
  s.delta = delta;
  s.decay = DecayKind::kExponential;
  s.rate = std::pow(0.5, 1.0 / std::max(half_life, 1e-9));
  s.eta_ramp = eta_ramp;
  s.xi_hold = xi_hold;
  s.horizon = std::max<std::int64_t>(1, eta_ramp);
  return s;
}

ShapingSchedule ShapingSchedule::linear(double eta0, std::vector<double> xi, double delta,
                                        std::int64_t horizon) {
  ShapingSchedule s;
  s.eta0 = eta0;
  s.xi = std::move(xi);
  s.delta = delta;
  s.decay = DecayKind::kLinear;
  s.horizon = horizon;
  s.eta_ramp = horizon;
  return s;
}

ScheduleValue schedule_at(const ShapingSchedule& s, std::int64_t k) {
  if (k < 0) throw std::invalid_argument("schedule_at: negative iteration");
  s.validate();
  ScheduleValue v;
  const std::int64_t ramp = s.decay == DecayKind::kLinear ? s.horizon : s.eta_ramp;
  if (ramp <= 0 || k >= ramp) {
    v.eta = 1.0;
  } else {
    v.eta = s.eta0 + (1.0 - s.eta0) * static_cast<double>(k) / static_cast<double>(ramp);
  }
  const std::int64_t holds = static_cast<std::int64_t>(s.xi.size()) - 1;
  if (k < holds * s.xi_hold) {
    v.xi = s.xi[static_cast<size_t>(k / s.xi_hold)];
  } else {
    const std::int64_t since = k - holds * s.xi_hold;
    const double last = s.xi.back();
    if (s.decay == DecayKind::kLinear) {
      const std::int64_t span = s.horizon - holds * s.xi_hold;
      v.xi = span <= 0 ? 0.0
                       : last * std::max(0.0, 1.0 - static_cast<double>(since) /
                                                        static_cast<double>(span));
    } else {
      v.xi = last * std::pow(s.rate, static_cast<double>(since));
    }
  }
  return v;
}

std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        double gamma, double lambda) {
  if (values.size() != rewards.size() + 1) {
    throw std::invalid_argument("gae: values must have one bootstrap entry past rewards");
  }
  if (gamma < 0 || gamma > 1 || lambda < 0 || lambda > 1) {
    throw std::invalid_argument("gae: gamma and lambda must be in [0, 1]");
  }
  std::vector<double> adv(rewards.size(), 0.0);
  double running = 0.0;
  for (size_t i = rewards.size(); i-- > 0;) {
    const double td = rewards[i] + gamma * values[i + 1] - values[i];
    running = td + gamma * lambda * running;
    adv[i] = running;
  }
  return adv;
}

AdvantageBatch shaped_advantage(std::span<const double> advantages,
                                std::span<const double> utilities, const ShapingSchedule& s,
                                std::int64_t k) {
  if (advantages.size() != utilities.size()) {
    throw std::invalid_argument("shaped_advantage: A and U lengths differ");
  }
  const ScheduleValue w = schedule_at(s, k);
  AdvantageBatch out;
  out.advantages.assign(advantages.begin(), advantages.end());
  out.utilities.assign(utilities.begin(), utilities.end());
  out.eta = w.eta;
  out.xi = w.xi;
  double mean_abs = 0.0;
  for (double a : advantages) mean_abs += std::abs(a);
  if (!advantages.empty()) mean_abs /= static_cast<double>(advantages.size());
  out.scale = std::max(mean_abs, s.adv_floor);
  out.shaped.resize(advantages.size());
  for (size_t i = 0; i < advantages.size(); ++i) {
    out.shaped[i] = w.xi == 0.0 ? w.eta * advantages[i]
                                : w.eta * advantages[i] + w.xi * out.scale * utilities[i];
  }
  return out;
}

}  // namespace mira
