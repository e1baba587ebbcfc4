#include "flimsr/nn/ops.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <thread>

#include "flimsr/resample.hpp"

namespace flimsr::nn {
namespace {

std::atomic<int> g_threads{1};

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <class T>
using ConstMapMat = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

// im2col scratch is bounded to this many elements per chunk of output rows.
constexpr std::size_t kColBudget = std::size_t{1} << 22;

std::size_t out_dim(std::size_t in, int stride) { return (in + 2 - 3) / static_cast<std::size_t>(stride) + 1; }

// cols[(ci*9 + ky*3 + kx)][(oy - oy0) * wo + ox] for output rows [oy0, oy1).
template <class T>
void im2col(const T* x, std::size_t cin, std::size_t h, std::size_t w, int stride, std::size_t wo,
            std::size_t oy0, std::size_t oy1, T* cols) {
  const std::size_t ncols = (oy1 - oy0) * wo;
  const long lh = static_cast<long>(h), lw = static_cast<long>(w);
  for (std::size_t ci = 0; ci < cin; ++ci) {
    const T* plane = x + ci * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = cols + (ci * 9 + static_cast<std::size_t>(ky * 3 + kx)) * ncols;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          T* dst = row + (oy - oy0) * wo;
          const long iy = static_cast<long>(oy) * stride + ky - 1;
          if (iy < 0 || iy >= lh) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox) * stride + kx - 1;
            dst[ox] = (ix < 0 || ix >= lw) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const T* cols, std::size_t cin, std::size_t h, std::size_t w, int stride, std::size_t wo,
            std::size_t oy0, std::size_t oy1, T* gx) {
  const std::size_t ncols = (oy1 - oy0) * wo;
  const long lh = static_cast<long>(h), lw = static_cast<long>(w);
  for (std::size_t ci = 0; ci < cin; ++ci) {
    T* plane = gx + ci * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = cols + (ci * 9 + static_cast<std::size_t>(ky * 3 + kx)) * ncols;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const long iy = static_cast<long>(oy) * stride + ky - 1;
          if (iy < 0 || iy >= lh) continue;
          const T* src = row + (oy - oy0) * wo;
          T* dst = plane + static_cast<std::size_t>(iy) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox) * stride + kx - 1;
            if (ix >= 0 && ix < lw) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

std::size_t rows_per_chunk(std::size_t k, std::size_t wo, std::size_t ho) {
  return std::clamp<std::size_t>(kColBudget / std::max<std::size_t>(1, k * wo), 1, ho);
}

}  // namespace

void set_num_threads(int n) { g_threads = std::max(1, n); }
int num_threads() { return g_threads; }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(g_threads.load()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += workers) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

template <class T>
Tensor<T> conv3x3_forward(const Tensor<T>& x, const T* weight, const T* bias, std::size_t cout, int stride) {
  const std::size_t ho = out_dim(x.h, stride), wo = out_dim(x.w, stride);
  const std::size_t k = x.c * 9;
  Tensor<T> y(x.n, cout, ho, wo);
  const ConstMapMat<T> wmat(weight, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(k),
                            Eigen::OuterStride<>(static_cast<Eigen::Index>(k)));
  const std::size_t chunk = rows_per_chunk(k, wo, ho);
  parallel_for(x.n, [&](std::size_t i) {
    std::vector<T> cols(k * chunk * wo);
    for (std::size_t oy0 = 0; oy0 < ho; oy0 += chunk) {
      const std::size_t oy1 = std::min(ho, oy0 + chunk);
      const std::size_t ncols = (oy1 - oy0) * wo;
      im2col(x.sample(i), x.c, x.h, x.w, stride, wo, oy0, oy1, cols.data());
      const ConstMapMat<T> cmat(cols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(ncols),
                                Eigen::OuterStride<>(static_cast<Eigen::Index>(ncols)));
      MapMat<T> ymat(y.sample(i) + oy0 * wo, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(ncols),
                     Eigen::OuterStride<>(static_cast<Eigen::Index>(ho * wo)));
      ymat.noalias() = wmat * cmat;
    }
    for (std::size_t co = 0; co < cout; ++co) {
      T* p = y.channel(i, co);
      for (std::size_t j = 0; j < ho * wo; ++j) p[j] += bias[co];
    }
  });
  return y;
}

template <class T>
Tensor<T> conv3x3_backward(const Tensor<T>& x, const Tensor<T>& grad_y, const T* weight, T* grad_weight,
                           T* grad_bias, int stride) {
  const std::size_t ho = grad_y.h, wo = grad_y.w, cout = grad_y.c;
  const std::size_t k = x.c * 9;
  if (ho != out_dim(x.h, stride) || wo != out_dim(x.w, stride) || grad_y.n != x.n) {
    throw std::invalid_argument("conv3x3_backward: shape mismatch");
  }
  Tensor<T> gx(x.n, x.c, x.h, x.w);
  const ConstMapMat<T> wmat(weight, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(k),
                            Eigen::OuterStride<>(static_cast<Eigen::Index>(k)));
  const std::size_t chunk = rows_per_chunk(k, wo, ho);
  std::vector<RowMat<T>> gw_parts(x.n);
  std::vector<std::vector<T>> gb_parts(x.n);

  parallel_for(x.n, [&](std::size_t i) {
    std::vector<T> cols(k * chunk * wo);
    std::vector<T> gcols(k * chunk * wo);
    RowMat<T> gw = RowMat<T>::Zero(static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(k));
    for (std::size_t oy0 = 0; oy0 < ho; oy0 += chunk) {
      const std::size_t oy1 = std::min(ho, oy0 + chunk);
      const std::size_t ncols = (oy1 - oy0) * wo;
      const auto ld = Eigen::OuterStride<>(static_cast<Eigen::Index>(ncols));
      im2col(x.sample(i), x.c, x.h, x.w, stride, wo, oy0, oy1, cols.data());
      const ConstMapMat<T> cmat(cols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(ncols), ld);
      const ConstMapMat<T> gymat(grad_y.sample(i) + oy0 * wo, static_cast<Eigen::Index>(cout),
                                 static_cast<Eigen::Index>(ncols),
                                 Eigen::OuterStride<>(static_cast<Eigen::Index>(ho * wo)));
      gw.noalias() += gymat * cmat.transpose();
      MapMat<T> gcmat(gcols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(ncols), ld);
      gcmat.noalias() = wmat.transpose() * gymat;
      col2im(gcols.data(), x.c, x.h, x.w, stride, wo, oy0, oy1, gx.sample(i));
    }
    gw_parts[i] = std::move(gw);
    auto& gb = gb_parts[i];
    gb.assign(cout, T(0));
    for (std::size_t co = 0; co < cout; ++co) {
      const T* p = grad_y.channel(i, co);
      double s = 0.0;
      for (std::size_t j = 0; j < ho * wo; ++j) s += p[j];
      gb[co] = static_cast<T>(s);
    }
  });

  MapMat<T> gwmat(grad_weight, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(k),
                  Eigen::OuterStride<>(static_cast<Eigen::Index>(k)));
  for (std::size_t i = 0; i < x.n; ++i) {
    gwmat += gw_parts[i];
    for (std::size_t co = 0; co < cout; ++co) grad_bias[co] += gb_parts[i][co];
  }
  return gx;
}

template <class T>
Tensor<T> batchnorm_forward_train(const Tensor<T>& x, const T* gamma, const T* beta, T* running_mean,
                                  T* running_var, BatchNormCache<T>& cache) {
  const std::size_t m = x.n * x.plane();
  Tensor<T> y(x.n, x.c, x.h, x.w);
  cache.x_hat = Tensor<T>(x.n, x.c, x.h, x.w);
  cache.inv_std.assign(x.c, T(0));
  for (std::size_t ch = 0; ch < x.c; ++ch) {
    double sum = 0.0;
    for (std::size_t i = 0; i < x.n; ++i) {
      const T* p = x.channel(i, ch);
      for (std::size_t j = 0; j < x.plane(); ++j) sum += p[j];
    }
    const double mean = sum / static_cast<double>(m);
    double ss = 0.0;
    for (std::size_t i = 0; i < x.n; ++i) {
      const T* p = x.channel(i, ch);
      for (std::size_t j = 0; j < x.plane(); ++j) ss += (p[j] - mean) * (p[j] - mean);
    }
    const double var = ss / static_cast<double>(m);
    const double inv = 1.0 / std::sqrt(var + kBatchNormEps);
    cache.inv_std[ch] = static_cast<T>(inv);
    for (std::size_t i = 0; i < x.n; ++i) {
      const T* p = x.channel(i, ch);
      T* xh = cache.x_hat.channel(i, ch);
      T* out = y.channel(i, ch);
      for (std::size_t j = 0; j < x.plane(); ++j) {
        xh[j] = static_cast<T>((p[j] - mean) * inv);
        out[j] = gamma[ch] * xh[j] + beta[ch];
      }
    }
    const double unbiased = m > 1 ? ss / static_cast<double>(m - 1) : var;
    running_mean[ch] = static_cast<T>((1.0 - kBatchNormMomentum) * running_mean[ch] + kBatchNormMomentum * mean);
    running_var[ch] = static_cast<T>((1.0 - kBatchNormMomentum) * running_var[ch] + kBatchNormMomentum * unbiased);
  }
  return y;
}

template <class T>
Tensor<T> batchnorm_forward_eval(const Tensor<T>& x, const T* gamma, const T* beta, const T* running_mean,
                                 const T* running_var) {
  Tensor<T> y(x.n, x.c, x.h, x.w);
  for (std::size_t ch = 0; ch < x.c; ++ch) {
    const T scale = static_cast<T>(gamma[ch] / std::sqrt(static_cast<double>(running_var[ch]) + kBatchNormEps));
    const T shift = beta[ch] - scale * running_mean[ch];
    for (std::size_t i = 0; i < x.n; ++i) {
      const T* p = x.channel(i, ch);
      T* out = y.channel(i, ch);
      for (std::size_t j = 0; j < x.plane(); ++j) out[j] = scale * p[j] + shift;
    }
  }
  return y;
}

template <class T>
Tensor<T> batchnorm_backward(const BatchNormCache<T>& cache, const Tensor<T>& grad_y, const T* gamma,
                             T* grad_gamma, T* grad_beta) {
  const auto& xh = cache.x_hat;
  require_same_shape(xh, grad_y, "batchnorm_backward");
  const auto m = static_cast<double>(xh.n * xh.plane());
  Tensor<T> gx(xh.n, xh.c, xh.h, xh.w);
  for (std::size_t ch = 0; ch < xh.c; ++ch) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t i = 0; i < xh.n; ++i) {
      const T* g = grad_y.channel(i, ch);
      const T* h = xh.channel(i, ch);
      for (std::size_t j = 0; j < xh.plane(); ++j) {
        sum_g += g[j];
        sum_gx += static_cast<double>(g[j]) * h[j];
      }
    }
    grad_gamma[ch] += static_cast<T>(sum_gx);
    grad_beta[ch] += static_cast<T>(sum_g);
    const double scale = gamma[ch] * static_cast<double>(cache.inv_std[ch]) / m;
    for (std::size_t i = 0; i < xh.n; ++i) {
      const T* g = grad_y.channel(i, ch);
      const T* h = xh.channel(i, ch);
      T* out = gx.channel(i, ch);
      for (std::size_t j = 0; j < xh.plane(); ++j) {
        out[j] = static_cast<T>(scale * (m * g[j] - sum_g - h[j] * sum_gx));
      }
    }
  }
  return gx;
}

template <class T>
void relu_inplace(Tensor<T>& x) {
  for (auto& v : x.data) v = v > T(0) ? v : T(0);
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& grad_y) {
  require_same_shape(y, grad_y, "relu_backward");
  Tensor<T> gx(y.n, y.c, y.h, y.w);
  for (std::size_t i = 0; i < y.size(); ++i) gx.data[i] = y.data[i] > T(0) ? grad_y.data[i] : T(0);
  return gx;
}

template <class T>
Tensor<T> avgpool2_forward(const Tensor<T>& x) {
  const std::size_t ho = x.h / 2, wo = x.w / 2;
  if (ho == 0 || wo == 0) throw std::invalid_argument("avgpool2: input too small");
  Tensor<T> y(x.n, x.c, ho, wo);
  for (std::size_t i = 0; i < x.n; ++i) {
    for (std::size_t ch = 0; ch < x.c; ++ch) {
      const T* p = x.channel(i, ch);
      T* out = y.channel(i, ch);
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const T* q = p + 2 * oy * x.w + 2 * ox;
          out[oy * wo + ox] = T(0.25) * (q[0] + q[1] + q[x.w] + q[x.w + 1]);
        }
      }
    }
  }
  return y;
}

template <class T>
Tensor<T> avgpool2_backward(const Tensor<T>& grad_y, std::size_t in_h, std::size_t in_w) {
  Tensor<T> gx(grad_y.n, grad_y.c, in_h, in_w);
  for (std::size_t i = 0; i < grad_y.n; ++i) {
    for (std::size_t ch = 0; ch < grad_y.c; ++ch) {
      const T* g = grad_y.channel(i, ch);
      T* out = gx.channel(i, ch);
      for (std::size_t oy = 0; oy < grad_y.h; ++oy) {
        for (std::size_t ox = 0; ox < grad_y.w; ++ox) {
          const T v = T(0.25) * g[oy * grad_y.w + ox];
          T* q = out + 2 * oy * in_w + 2 * ox;
          q[0] += v;
          q[1] += v;
          q[in_w] += v;
          q[in_w + 1] += v;
        }
      }
    }
  }
  return gx;
}

template <class T>
Tensor<T> resize_forward(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  Tensor<T> y(x.n, x.c, out_h, out_w);
  for (std::size_t i = 0; i < x.n; ++i) {
    for (std::size_t ch = 0; ch < x.c; ++ch) {
      bilinear_resize_plane(x.channel(i, ch), x.h, x.w, y.channel(i, ch), out_h, out_w);
    }
  }
  return y;
}

template <class T>
Tensor<T> resize_backward(const Tensor<T>& grad_y, std::size_t in_h, std::size_t in_w) {
  Tensor<T> gx(grad_y.n, grad_y.c, in_h, in_w);
  for (std::size_t i = 0; i < grad_y.n; ++i) {
    for (std::size_t ch = 0; ch < grad_y.c; ++ch) {
      bilinear_resize_plane_adjoint(grad_y.channel(i, ch), grad_y.h, grad_y.w, gx.channel(i, ch), in_h, in_w);
    }
  }
  return gx;
}

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) throw std::invalid_argument("concat_channels: shape mismatch");
  Tensor<T> y(a.n, a.c + b.c, a.h, a.w);
  for (std::size_t i = 0; i < a.n; ++i) {
    std::copy(a.sample(i), a.sample(i) + a.sample_size(), y.sample(i));
    std::copy(b.sample(i), b.sample(i) + b.sample_size(), y.sample(i) + a.sample_size());
  }
  return y;
}

template <class T>
void split_channels(const Tensor<T>& grad, std::size_t ca, Tensor<T>& grad_a, Tensor<T>& grad_b) {
  grad_a = Tensor<T>(grad.n, ca, grad.h, grad.w);
  grad_b = Tensor<T>(grad.n, grad.c - ca, grad.h, grad.w);
  for (std::size_t i = 0; i < grad.n; ++i) {
    std::copy(grad.sample(i), grad.sample(i) + grad_a.sample_size(), grad_a.sample(i));
    std::copy(grad.sample(i) + grad_a.sample_size(), grad.sample(i) + grad.sample_size(), grad_b.sample(i));
  }
}

template <class T>
void add_zero_padded(Tensor<T>& y, const Tensor<T>& x) {
  if (x.n != y.n || x.h != y.h || x.w != y.w || x.c > y.c) {
    throw std::invalid_argument("add_zero_padded: incompatible shapes");
  }
  for (std::size_t i = 0; i < x.n; ++i) {
    const T* src = x.sample(i);
    T* dst = y.sample(i);
    for (std::size_t j = 0; j < x.sample_size(); ++j) dst[j] += src[j];
  }
}

template <class T>
void add_channel_bias(Tensor<T>& y, const std::vector<T>& bias) {
  if (bias.size() != y.n * y.c) throw std::invalid_argument("add_channel_bias: size mismatch");
  for (std::size_t i = 0; i < y.n; ++i) {
    for (std::size_t ch = 0; ch < y.c; ++ch) {
      T* p = y.channel(i, ch);
      const T b = bias[i * y.c + ch];
      for (std::size_t j = 0; j < y.plane(); ++j) p[j] += b;
    }
  }
}

namespace {

std::pair<std::size_t, std::size_t> adaptive_range(std::size_t i, std::size_t in, std::size_t out) {
  const std::size_t start = (i * in) / out;
  const std::size_t end = ((i + 1) * in + out - 1) / out;
  return {start, end};
}

}  // namespace

template <class T>
Tensor<T> adaptive_avgpool_forward(const Tensor<T>& x, std::size_t out) {
  Tensor<T> y(x.n, x.c, out, out);
  for (std::size_t i = 0; i < x.n; ++i) {
    for (std::size_t ch = 0; ch < x.c; ++ch) {
      const T* p = x.channel(i, ch);
      T* o = y.channel(i, ch);
      for (std::size_t oy = 0; oy < out; ++oy) {
        const auto [y0, y1] = adaptive_range(oy, x.h, out);
        for (std::size_t ox = 0; ox < out; ++ox) {
          const auto [x0, x1] = adaptive_range(ox, x.w, out);
          double s = 0.0;
          for (std::size_t yy = y0; yy < y1; ++yy) {
            for (std::size_t xx = x0; xx < x1; ++xx) s += p[yy * x.w + xx];
          }
          o[oy * out + ox] = static_cast<T>(s / static_cast<double>((y1 - y0) * (x1 - x0)));
        }
      }
    }
  }
  return y;
}

template <class T>
Tensor<T> adaptive_avgpool_backward(const Tensor<T>& grad_y, std::size_t in_h, std::size_t in_w) {
  const std::size_t out = grad_y.h;
  Tensor<T> gx(grad_y.n, grad_y.c, in_h, in_w);
  for (std::size_t i = 0; i < grad_y.n; ++i) {
    for (std::size_t ch = 0; ch < grad_y.c; ++ch) {
      const T* g = grad_y.channel(i, ch);
      T* o = gx.channel(i, ch);
      for (std::size_t oy = 0; oy < out; ++oy) {
        const auto [y0, y1] = adaptive_range(oy, in_h, out);
        for (std::size_t ox = 0; ox < out; ++ox) {
          const auto [x0, x1] = adaptive_range(ox, in_w, out);
          const T v = static_cast<T>(g[oy * out + ox] / static_cast<double>((y1 - y0) * (x1 - x0)));
          for (std::size_t yy = y0; yy < y1; ++yy) {
            for (std::size_t xx = x0; xx < x1; ++xx) o[yy * in_w + xx] += v;
          }
        }
      }
    }
  }
  return gx;
}

template <class T>
Tensor<T> linear_forward(const Tensor<T>& x, const T* weight, const T* bias, std::size_t out) {
  const std::size_t in = x.sample_size();
  Tensor<T> y(x.n, out, 1, 1);
  const ConstMapMat<T> wmat(weight, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in),
                            Eigen::OuterStride<>(static_cast<Eigen::Index>(in)));
  const ConstMapMat<T> xmat(x.data.data(), static_cast<Eigen::Index>(x.n), static_cast<Eigen::Index>(in),
                            Eigen::OuterStride<>(static_cast<Eigen::Index>(in)));
  MapMat<T> ymat(y.data.data(), static_cast<Eigen::Index>(x.n), static_cast<Eigen::Index>(out),
                 Eigen::OuterStride<>(static_cast<Eigen::Index>(out)));
  ymat.noalias() = xmat * wmat.transpose();
  for (std::size_t i = 0; i < x.n; ++i) {
    for (std::size_t o = 0; o < out; ++o) y.data[i * out + o] += bias[o];
  }
  return y;
}

template <class T>
Tensor<T> linear_backward(const Tensor<T>& x, const Tensor<T>& grad_y, const T* weight, T* grad_weight,
                          T* grad_bias) {
  const std::size_t in = x.sample_size();
  const std::size_t out = grad_y.sample_size();
  Tensor<T> gx(x.n, x.c, x.h, x.w);
  const ConstMapMat<T> wmat(weight, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in),
                            Eigen::OuterStride<>(static_cast<Eigen::Index>(in)));
  const ConstMapMat<T> xmat(x.data.data(), static_cast<Eigen::Index>(x.n), static_cast<Eigen::Index>(in),
                            Eigen::OuterStride<>(static_cast<Eigen::Index>(in)));
  const ConstMapMat<T> gymat(grad_y.data.data(), static_cast<Eigen::Index>(x.n), static_cast<Eigen::Index>(out),
                             Eigen::OuterStride<>(static_cast<Eigen::Index>(out)));
  MapMat<T> gwmat(grad_weight, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in),
                  Eigen::OuterStride<>(static_cast<Eigen::Index>(in)));
  MapMat<T> gxmat(gx.data.data(), static_cast<Eigen::Index>(x.n), static_cast<Eigen::Index>(in),
                  Eigen::OuterStride<>(static_cast<Eigen::Index>(in)));
  gwmat.noalias() += gymat.transpose() * xmat;
  gxmat.noalias() = gymat * wmat;
  for (std::size_t i = 0; i < x.n; ++i) {
    for (std::size_t o = 0; o < out; ++o) grad_bias[o] += grad_y.data[i * out + o];
  }
  return gx;
}

#define FLIMSR_INSTANTIATE_OPS(T)                                                                          \
  template Tensor<T> conv3x3_forward(const Tensor<T>&, const T*, const T*, std::size_t, int);              \
  template Tensor<T> conv3x3_backward(const Tensor<T>&, const Tensor<T>&, const T*, T*, T*, int);          \
  template Tensor<T> batchnorm_forward_train(const Tensor<T>&, const T*, const T*, T*, T*,                 \
                                             BatchNormCache<T>&);                                          \
  template Tensor<T> batchnorm_forward_eval(const Tensor<T>&, const T*, const T*, const T*, const T*);     \
  template Tensor<T> batchnorm_backward(const BatchNormCache<T>&, const Tensor<T>&, const T*, T*, T*);     \
  template void relu_inplace(Tensor<T>&);                                                                  \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> avgpool2_forward(const Tensor<T>&);                                                   \
  template Tensor<T> avgpool2_backward(const Tensor<T>&, std::size_t, std::size_t);                        \
  template Tensor<T> resize_forward(const Tensor<T>&, std::size_t, std::size_t);                           \
  template Tensor<T> resize_backward(const Tensor<T>&, std::size_t, std::size_t);                          \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                                  \
  template void split_channels(const Tensor<T>&, std::size_t, Tensor<T>&, Tensor<T>&);                     \
  template void add_zero_padded(Tensor<T>&, const Tensor<T>&);                                             \
  template void add_channel_bias(Tensor<T>&, const std::vector<T>&);                                       \
  template Tensor<T> adaptive_avgpool_forward(const Tensor<T>&, std::size_t);                              \
  template Tensor<T> adaptive_avgpool_backward(const Tensor<T>&, std::size_t, std::size_t);                \
  template Tensor<T> linear_forward(const Tensor<T>&, const T*, const T*, std::size_t);                    \
  template Tensor<T> linear_backward(const Tensor<T>&, const Tensor<T>&, const T*, T*, T*);

FLIMSR_INSTANTIATE_OPS(float)
FLIMSR_INSTANTIATE_OPS(double)

}  // namespace flimsr::nn
