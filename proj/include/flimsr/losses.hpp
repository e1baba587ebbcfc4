#pragma once

#include <span>

namespace flimsr {

/// u^2/2 for |u| < 1, |u| - 1/2 otherwise.
double huber_elementwise(double u);
double huber_derivative(double u);

/// Mean Huber loss over every element of the pair.
double smooth_l1(std::span<const float> pred, std::span<const float> target);
double smooth_l1(std::span<const double> pred, std::span<const double> target);

/// d smooth_l1 / d pred, written into grad (same length as pred).
void smooth_l1_grad(std::span<const float> pred, std::span<const float> target, std::span<float> grad);
void smooth_l1_grad(std::span<const double> pred, std::span<const double> target, std::span<double> grad);

/// Least-squares discriminator objective: d_fake^2 + (d_real - 1)^2.
double discriminator_loss(double d_fake, double d_real);

/// Adversarial part of the generator objective: (d_fake - 1)^2.
double adversarial_loss(double d_fake);

/// smooth_l1(pred, target) + alpha * (d_fake - 1)^2.
double generator_loss(std::span<const float> pred, std::span<const float> target, double d_fake, double alpha);

}  // namespace flimsr
