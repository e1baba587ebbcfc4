#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "flimsr/nn/tensor.hpp"

namespace flimsr::nn {

/// Worker threads used by batch-parallel kernels. Results do not depend on the
/// thread count: per-sample partial gradients are reduced in sample order.
void set_num_threads(int n);
int num_threads();

/// Runs fn(i) for i in [0, n), statically partitioned over num_threads() workers.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// 3x3 convolution, zero padding 1, stride 1 or 2. Weights are [cout][cin][3][3].
template <class T>
Tensor<T> conv3x3_forward(const Tensor<T>& x, const T* weight, const T* bias, std::size_t cout, int stride);

/// Accumulates dL/dweight and dL/dbias; returns dL/dx.
template <class T>
Tensor<T> conv3x3_backward(const Tensor<T>& x, const Tensor<T>& grad_y, const T* weight, T* grad_weight,
                           T* grad_bias, int stride);

template <class T>
struct BatchNormCache {
  Tensor<T> x_hat;
  std::vector<T> inv_std;
};

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEps = 1e-5;

/// Batch statistics over (N, H, W); updates running mean / unbiased running variance.
template <class T>
Tensor<T> batchnorm_forward_train(const Tensor<T>& x, const T* gamma, const T* beta, T* running_mean,
                                  T* running_var, BatchNormCache<T>& cache);

template <class T>
Tensor<T> batchnorm_forward_eval(const Tensor<T>& x, const T* gamma, const T* beta, const T* running_mean,
                                 const T* running_var);

template <class T>
Tensor<T> batchnorm_backward(const BatchNormCache<T>& cache, const Tensor<T>& grad_y, const T* gamma,
                             T* grad_gamma, T* grad_beta);

template <class T>
void relu_inplace(Tensor<T>& x);

/// grad_y masked by (y > 0), where y is the ReLU output.
template <class T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& grad_y);

/// 2x2 average pooling, stride 2 (floor on odd sizes).
template <class T>
Tensor<T> avgpool2_forward(const Tensor<T>& x);
template <class T>
Tensor<T> avgpool2_backward(const Tensor<T>& grad_y, std::size_t in_h, std::size_t in_w);

/// Half-pixel-aligned bilinear resize of every plane.
template <class T>
Tensor<T> resize_forward(const Tensor<T>& x, std::size_t out_h, std::size_t out_w);
template <class T>
Tensor<T> resize_backward(const Tensor<T>& grad_y, std::size_t in_h, std::size_t in_w);

/// Channel concatenation [a, b].
template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
void split_channels(const Tensor<T>& grad, std::size_t ca, Tensor<T>& grad_a, Tensor<T>& grad_b);

/// y += x zero-padded along channels (requires x.c <= y.c).
template <class T>
void add_zero_padded(Tensor<T>& y, const Tensor<T>& x);

/// Adds a per-sample, per-channel offset [n][c] to every pixel.
template <class T>
void add_channel_bias(Tensor<T>& y, const std::vector<T>& bias);

/// PyTorch-style adaptive average pooling to out x out.
template <class T>
Tensor<T> adaptive_avgpool_forward(const Tensor<T>& x, std::size_t out);
template <class T>
Tensor<T> adaptive_avgpool_backward(const Tensor<T>& grad_y, std::size_t in_h, std::size_t in_w);

/// Fully connected layer on flattened samples; weight is [out][in]. Output shape n x out x 1 x 1.
template <class T>
Tensor<T> linear_forward(const Tensor<T>& x, const T* weight, const T* bias, std::size_t out);
template <class T>
Tensor<T> linear_backward(const Tensor<T>& x, const Tensor<T>& grad_y, const T* weight, T* grad_weight,
                          T* grad_bias);

}  // namespace flimsr::nn
