#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace flimsr::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void to_json(nlohmann::json& j, const AdamConfig& c) {
  j = {{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
}
inline void from_json(const nlohmann::json& j, AdamConfig& c) {
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
}

/// Adam with bias-corrected moments; moments are kept in double.
template <class T>
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t size, const AdamConfig& config) : config_(config), m_(size, 0.0), v_(size, 0.0) {
    if (!(config.lr > 0.0) || config.beta1 < 0.0 || config.beta1 >= 1.0 || config.beta2 < 0.0 ||
        config.beta2 >= 1.0 || !(config.eps > 0.0)) {
      throw std::invalid_argument("invalid Adam hyperparameters");
    }
  }

  void step(std::span<T> values, std::span<const T> grads) {
    if (values.size() != m_.size() || grads.size() != m_.size()) {
      throw std::invalid_argument("Adam: parameter count mismatch");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < m_.size(); ++i) {
      const double g = grads[i];
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
      v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m_[i] / c1;
      const double v_hat = v_[i] / c2;
      values[i] = static_cast<T>(values[i] - config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps));
    }
  }

  long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

}  // namespace flimsr::nn
