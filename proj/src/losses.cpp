#include "flimsr/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace flimsr {

double huber_elementwise(double u) {
  const double a = std::fabs(u);
  return a < 1.0 ? 0.5 * u * u : a - 0.5;
}

double huber_derivative(double u) {
  if (u >= 1.0) return 1.0;
  if (u <= -1.0) return -1.0;
  return u;
}

namespace {

template <class T>
double smooth_l1_impl(std::span<const T> pred, std::span<const T> target) {
  if (pred.size() != target.size()) throw std::invalid_argument("smooth_l1: shape mismatch");
  if (pred.empty()) throw std::invalid_argument("smooth_l1: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sum += huber_elementwise(static_cast<double>(pred[i]) - static_cast<double>(target[i]));
  }
  return sum / static_cast<double>(pred.size());
}

template <class T>
void smooth_l1_grad_impl(std::span<const T> pred, std::span<const T> target, std::span<T> grad) {
  if (pred.size() != target.size() || grad.size() != pred.size()) {
    throw std::invalid_argument("smooth_l1_grad: shape mismatch");
  }
  const double scale = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    grad[i] = static_cast<T>(scale * huber_derivative(static_cast<double>(pred[i]) - static_cast<double>(target[i])));
  }
}

}  // namespace

double smooth_l1(std::span<const float> pred, std::span<const float> target) { return smooth_l1_impl(pred, target); }
double smooth_l1(std::span<const double> pred, std::span<const double> target) {
  return smooth_l1_impl(pred, target);
}

void smooth_l1_grad(std::span<const float> pred, std::span<const float> target, std::span<float> grad) {
  smooth_l1_grad_impl(pred, target, grad);
}
void smooth_l1_grad(std::span<const double> pred, std::span<const double> target, std::span<double> grad) {
  smooth_l1_grad_impl(pred, target, grad);
}

double discriminator_loss(double d_fake, double d_real) {
  return d_fake * d_fake + (d_real - 1.0) * (d_real - 1.0);
}

double adversarial_loss(double d_fake) { return (d_fake - 1.0) * (d_fake - 1.0); }

double generator_loss(std::span<const float> pred, std::span<const float> target, double d_fake, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  return smooth_l1(pred, target) + alpha * adversarial_loss(d_fake);
}

}  // namespace flimsr
