#include <Eigen/Core>

#include <algorithm>
#include <string>

#include "blastoseg/layers.hpp"
#include "blastoseg/parallel.hpp"

namespace blastoseg::numerics {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

struct ConvPlan {
  int c_in, c_out, kh, kw, stride, dilation;
  int in_h, in_w;
  ConvGeometry geo;
  int k_rows() const { return c_in * kh * kw; }
  int positions() const { return geo.out_h * geo.out_w; }
  bool direct() const { return kh == 1 && kw == 1 && stride == 1; }
};

template <typename T>
ConvPlan plan_conv(const Tensor<T>& input, const Tensor<T>& kernels, int stride, int dilation) {
  if (stride < 1) throw UnsupportedConfiguration("conv2d stride must be >= 1");
  if (dilation < 1) throw UnsupportedConfiguration("conv2d dilation must be >= 1");
  if (kernels.h() < 1 || kernels.w() < 1) throw DimensionError("kernel", "empty kernel");
  if (input.c() != kernels.c()) {
    throw DimensionError("c", "input has " + std::to_string(input.c()) +
                                  " channels but kernels expect " + std::to_string(kernels.c()));
  }
  ConvPlan p{input.c(), kernels.n(), kernels.h(), kernels.w(), stride, dilation,
             input.h(),  input.w(),  {}};
  p.geo = same_padding(input.h(), input.w(), p.kh, p.kw, stride, dilation);
  return p;
}

// cols is (c_in*kh*kw) x (out_h*out_w).
template <typename T>
void im2col(const T* in, const ConvPlan& p, T* cols) {
  const int oh = p.geo.out_h, ow = p.geo.out_w;
  for (int c = 0; c < p.c_in; ++c) {
    const T* plane = in + static_cast<std::size_t>(c) * p.in_h * p.in_w;
    for (int i = 0; i < p.kh; ++i) {
      for (int j = 0; j < p.kw; ++j) {
        T* row = cols + (static_cast<std::size_t>((c * p.kh + i) * p.kw + j)) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * p.stride - p.geo.pad_top + i * p.dilation;
          T* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= p.in_h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * p.in_w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * p.stride - p.geo.pad_left + j * p.dilation;
            dst[ox] = (ix >= 0 && ix < p.in_w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const ConvPlan& p, T* grad_in) {
  const int oh = p.geo.out_h, ow = p.geo.out_w;
  for (int c = 0; c < p.c_in; ++c) {
    T* plane = grad_in + static_cast<std::size_t>(c) * p.in_h * p.in_w;
    for (int i = 0; i < p.kh; ++i) {
      for (int j = 0; j < p.kw; ++j) {
        const T* row = cols + (static_cast<std::size_t>((c * p.kh + i) * p.kw + j)) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * p.stride - p.geo.pad_top + i * p.dilation;
          if (iy < 0 || iy >= p.in_h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * ow;
          T* dst = plane + static_cast<std::size_t>(iy) * p.in_w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * p.stride - p.geo.pad_left + j * p.dilation;
            if (ix >= 0 && ix < p.in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
std::vector<T> channel_sums(const Tensor<T>& t) {
  std::vector<T> out(t.c());
  for (int c = 0; c < t.c(); ++c) {
    double acc = 0.0;
    for (int n = 0; n < t.n(); ++n) {
      const T* p = t.channel(n, c);
      for (std::size_t k = 0; k < t.shape().plane(); ++k) acc += p[k];
    }
    out[c] = static_cast<T>(acc);
  }
  return out;
}

// Adds per-sample contributions into `total` in sample order regardless of the
// worker count, so reductions are reproducible bit-for-bit.
template <typename T, typename Fn>
void ordered_accumulate(int samples, std::size_t length, T* total, Fn&& per_sample) {
  if (thread_count() <= 1 || samples <= 1) {
    std::vector<T> scratch(length);
    for (int n = 0; n < samples; ++n) {
      per_sample(n, scratch.data());
      for (std::size_t k = 0; k < length; ++k) total[k] += scratch[k];
    }
    return;
  }
  std::vector<std::vector<T>> parts(samples, std::vector<T>(length));
  parallel_for(samples, [&](int n) { per_sample(n, parts[n].data()); });
  for (int n = 0; n < samples; ++n) {
    for (std::size_t k = 0; k < length; ++k) total[k] += parts[n][k];
  }
}

}  // namespace

ConvGeometry same_padding(int h, int w, int kh, int kw, int stride, int dilation) {
  ConvGeometry g;
  g.out_h = (h + stride - 1) / stride;
  g.out_w = (w + stride - 1) / stride;
  const int eff_h = (kh - 1) * dilation + 1;
  const int eff_w = (kw - 1) * dilation + 1;
  const int pad_h = std::max((g.out_h - 1) * stride + eff_h - h, 0);
  const int pad_w = std::max((g.out_w - 1) * stride + eff_w - w, 0);
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, std::span<const T> bias,
                 int stride, int dilation) {
  const ConvPlan p = plan_conv(input, kernels, stride, dilation);
  if (!bias.empty() && static_cast<int>(bias.size()) != p.c_out) {
    throw DimensionError("bias", "expected " + std::to_string(p.c_out) + " entries");
  }
  Tensor<T> out(Shape4{input.n(), p.c_out, p.geo.out_h, p.geo.out_w});
  const int K = p.k_rows(), P = p.positions();
  ConstMatrixMap<T> weights(kernels.raw(), p.c_out, K);
  parallel_for(input.n(), [&](int n) {
    MatrixMap<T> result(out.sample(n), p.c_out, P);
    if (p.direct()) {
      result.noalias() = weights * ConstMatrixMap<T>(input.sample(n), K, P);
    } else {
      std::vector<T> cols(static_cast<std::size_t>(K) * P);
      im2col(input.sample(n), p, cols.data());
      result.noalias() = weights * ConstMatrixMap<T>(cols.data(), K, P);
    }
    if (!bias.empty()) {
      for (int o = 0; o < p.c_out; ++o) result.row(o).array() += bias[o];
    }
  });
  return out;
}

template <typename T>
ConvGradients<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernels,
                                 const Tensor<T>& grad_output, int stride, int dilation) {
  const ConvPlan p = plan_conv(input, kernels, stride, dilation);
  require_same_shape(grad_output.shape(), Shape4{input.n(), p.c_out, p.geo.out_h, p.geo.out_w},
                     "conv2d_backward grad_output");
  const int K = p.k_rows(), P = p.positions();
  ConvGradients<T> g{Tensor<T>(input.shape()), Tensor<T>(kernels.shape()), {}};
  ConstMatrixMap<T> weights(kernels.raw(), p.c_out, K);

  parallel_for(input.n(), [&](int n) {
    ConstMatrixMap<T> go(grad_output.sample(n), p.c_out, P);
    if (p.direct()) {
      MatrixMap<T>(g.input.sample(n), K, P).noalias() = weights.transpose() * go;
    } else {
      std::vector<T> dcols(static_cast<std::size_t>(K) * P);
      MatrixMap<T>(dcols.data(), K, P).noalias() = weights.transpose() * go;
      col2im(dcols.data(), p, g.input.sample(n));
    }
  });

  ordered_accumulate<T>(input.n(), kernels.size(), g.kernels.raw(), [&](int n, T* dst) {
    ConstMatrixMap<T> go(grad_output.sample(n), p.c_out, P);
    MatrixMap<T> dw(dst, p.c_out, K);
    if (p.direct()) {
      dw.noalias() = go * ConstMatrixMap<T>(input.sample(n), K, P).transpose();
    } else {
      std::vector<T> cols(static_cast<std::size_t>(K) * P);
      im2col(input.sample(n), p, cols.data());
      dw.noalias() = go * ConstMatrixMap<T>(cols.data(), K, P).transpose();
    }
  });
  g.bias = channel_sums(grad_output);
  return g;
}

namespace {

template <typename T>
void check_transposed(const Tensor<T>& input, const Tensor<T>& kernels, int stride) {
  if (stride != 2 || kernels.h() != 2 || kernels.w() != 2) {
    throw UnsupportedConfiguration("transposed_conv2d supports only 2x2 kernels with stride 2");
  }
  if (input.c() != kernels.n()) {
    throw DimensionError("c", "input has " + std::to_string(input.c()) +
                                  " channels but up-convolution kernels expect " +
                                  std::to_string(kernels.n()));
  }
}

}  // namespace

template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& input, const Tensor<T>& kernels,
                            std::span<const T> bias, int stride) {
  check_transposed(input, kernels, stride);
  const int c_in = input.c(), c_out = kernels.c(), h = input.h(), w = input.w();
  if (!bias.empty() && static_cast<int>(bias.size()) != c_out) {
    throw DimensionError("bias", "expected " + std::to_string(c_out) + " entries");
  }
  Tensor<T> out(Shape4{input.n(), c_out, 2 * h, 2 * w});
  const int HW = h * w;
  // kernels viewed as (c_in) x (c_out*4); stamps = kernels^T * x.
  ConstMatrixMap<T> kmat(kernels.raw(), c_in, c_out * 4);
  parallel_for(input.n(), [&](int n) {
    RowMatrix<T> stamps = kmat.transpose() * ConstMatrixMap<T>(input.sample(n), c_in, HW);
    for (int o = 0; o < c_out; ++o) {
      T* plane = out.channel(n, o);
      const T b = bias.empty() ? T(0) : bias[o];
      for (int a = 0; a < 2; ++a) {
        for (int bb = 0; bb < 2; ++bb) {
          const T* row = stamps.data() + static_cast<std::size_t>(o * 4 + a * 2 + bb) * HW;
          for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
              plane[(2 * i + a) * (2 * w) + 2 * j + bb] = row[i * w + j] + b;
            }
          }
        }
      }
    }
  });
  return out;
}

template <typename T>
ConvGradients<T> transposed_conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernels,
                                            const Tensor<T>& grad_output, int stride) {
  check_transposed(input, kernels, stride);
  const int c_in = input.c(), c_out = kernels.c(), h = input.h(), w = input.w();
  require_same_shape(grad_output.shape(), Shape4{input.n(), c_out, 2 * h, 2 * w},
                     "transposed_conv2d_backward grad_output");
  const int HW = h * w;
  ConvGradients<T> g{Tensor<T>(input.shape()), Tensor<T>(kernels.shape()), {}};
  ConstMatrixMap<T> kmat(kernels.raw(), c_in, c_out * 4);

  auto gather = [&](int n) {
    RowMatrix<T> gathered(c_out * 4, HW);
    for (int o = 0; o < c_out; ++o) {
      const T* plane = grad_output.channel(n, o);
      for (int a = 0; a < 2; ++a) {
        for (int bb = 0; bb < 2; ++bb) {
          T* row = gathered.data() + static_cast<std::size_t>(o * 4 + a * 2 + bb) * HW;
          for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) row[i * w + j] = plane[(2 * i + a) * (2 * w) + 2 * j + bb];
          }
        }
      }
    }
    return gathered;
  };

  parallel_for(input.n(), [&](int n) {
    RowMatrix<T> gathered = gather(n);
    MatrixMap<T>(g.input.sample(n), c_in, HW).noalias() = kmat * gathered;
  });
  ordered_accumulate<T>(input.n(), kernels.size(), g.kernels.raw(), [&](int n, T* dst) {
    RowMatrix<T> gathered = gather(n);
    MatrixMap<T>(dst, c_in, c_out * 4).noalias() =
        ConstMatrixMap<T>(input.sample(n), c_in, HW) * gathered.transpose();
  });
  g.bias = channel_sums(grad_output);
  return g;
}

#define BLASTOSEG_INSTANTIATE_CONV(T)                                                        \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, std::span<const T>, int, int); \
  template ConvGradients<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&,               \
                                            const Tensor<T>&, int, int);                      \
  template Tensor<T> transposed_conv2d(const Tensor<T>&, const Tensor<T>&, std::span<const T>, \
                                       int);                                                  \
  template ConvGradients<T> transposed_conv2d_backward(const Tensor<T>&, const Tensor<T>&,    \
                                                       const Tensor<T>&, int);

BLASTOSEG_INSTANTIATE_CONV(float)
BLASTOSEG_INSTANTIATE_CONV(double)

}  // namespace blastoseg::numerics
