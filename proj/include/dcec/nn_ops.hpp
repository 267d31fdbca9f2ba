#ifndef DCEC_NN_OPS_HPP
#define DCEC_NN_OPS_HPP

#include <algorithm>
#include <cmath>

#include "dcec/tensor.hpp"

namespace dcec {

enum class Padding { kValid, kSame };

// elu(x) = x for x > 0, alpha * (e^x - 1) otherwise.
template <typename Scalar>
Tensor<Scalar> elu(const Tensor<Scalar>& x, Scalar alpha = Scalar(1)) {
  Tensor<Scalar> out(x.shape());
  const Scalar* in = x.data();
  Scalar* o = out.data();
  for (Index i = 0; i < x.size(); ++i)
    o[i] = in[i] > Scalar(0) ? in[i] : alpha * std::expm1(in[i]);
  return out;
}

// Chain rule through elu: upstream * (x > 0 ? 1 : alpha * e^x).
template <typename Scalar>
Tensor<Scalar> elu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& upstream,
                            Scalar alpha = Scalar(1)) {
  if (x.shape() != upstream.shape())
    throw ShapeError("elu_backward: upstream " + shape_string(upstream.shape()) +
                     " does not match input " + shape_string(x.shape()));
  Tensor<Scalar> out(x.shape());
  const Scalar* in = x.data();
  const Scalar* u = upstream.data();
  Scalar* o = out.data();
  for (Index i = 0; i < x.size(); ++i)
    o[i] = in[i] > Scalar(0) ? u[i] : u[i] * alpha * std::exp(in[i]);
  return out;
}

template <typename Scalar>
struct DenseGrads {
  Tensor<Scalar> d_input, d_weights, d_bias;
};

// Affine map on row vectors: [batch, in] x [in, out] + [out].
template <typename Scalar>
Tensor<Scalar> dense(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                     const Tensor<Scalar>& bias) {
  if (input.rank() != 2 || weights.rank() != 2 || bias.rank() != 1 ||
      input.dim(1) != weights.dim(0) || bias.dim(0) != weights.dim(1))
    throw ShapeError("dense: incompatible shapes " + shape_string(input.shape()) + " " +
                     shape_string(weights.shape()) + " " + shape_string(bias.shape()));
  Tensor<Scalar> out({input.dim(0), weights.dim(1)});
  out.matrix().noalias() = input.matrix() * weights.matrix();
  out.matrix().rowwise() += bias.vec().transpose();
  return out;
}

template <typename Scalar>
DenseGrads<Scalar> dense_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                                  const Tensor<Scalar>& upstream) {
  if (upstream.rank() != 2 || upstream.dim(0) != input.dim(0) ||
      upstream.dim(1) != weights.dim(1))
    throw ShapeError("dense_backward: upstream " + shape_string(upstream.shape()) +
                     " does not match [" + std::to_string(input.dim(0)) + "," +
                     std::to_string(weights.dim(1)) + "]");
  DenseGrads<Scalar> g{Tensor<Scalar>(input.shape()), Tensor<Scalar>(weights.shape()),
                       Tensor<Scalar>({weights.dim(1)})};
  g.d_input.matrix().noalias() = upstream.matrix() * weights.matrix().transpose();
  g.d_weights.matrix().noalias() = input.matrix().transpose() * upstream.matrix();
  g.d_bias.vec() = upstream.matrix().colwise().sum();
  return g;
}

// Geometry of one strided cross-correlation [n, in_h, in_w, in_c] -> [n, out_h, out_w, filters].
// 'same' padding follows the ceil convention: out = ceil(in / stride), any odd padding
// goes to the bottom/right edge.
struct ConvGeometry {
  Index batch, in_h, in_w, in_c;
  Index kh, kw, filters;
  Index stride;
  Index out_h, out_w;
  Index pad_top, pad_left;

  Index patch_len() const { return kh * kw * in_c; }
  Index out_rows() const { return batch * out_h * out_w; }
};

inline ConvGeometry make_conv_geometry(const std::vector<Index>& input_shape,
                                       const std::vector<Index>& kernel_shape, Index stride,
                                       Padding padding) {
  if (input_shape.size() != 4)
    throw ShapeError("conv input must be [n,h,w,c], got " + shape_string(input_shape));
  if (kernel_shape.size() != 4)
    throw ShapeError("conv kernels must be [kh,kw,c,f], got " + shape_string(kernel_shape));
  if (stride < 1) throw ShapeError("conv stride must be >= 1");
  if (kernel_shape[2] != input_shape[3])
    throw ShapeError("conv kernel channels " + std::to_string(kernel_shape[2]) +
                     " do not match input channels " + std::to_string(input_shape[3]));

  ConvGeometry g{};
  g.batch = input_shape[0];
  g.in_h = input_shape[1];
  g.in_w = input_shape[2];
  g.in_c = input_shape[3];
  g.kh = kernel_shape[0];
  g.kw = kernel_shape[1];
  g.filters = kernel_shape[3];
  g.stride = stride;

  if (padding == Padding::kSame) {
    g.out_h = (g.in_h + stride - 1) / stride;
    g.out_w = (g.in_w + stride - 1) / stride;
    const Index pad_h = std::max<Index>((g.out_h - 1) * stride + g.kh - g.in_h, 0);
    const Index pad_w = std::max<Index>((g.out_w - 1) * stride + g.kw - g.in_w, 0);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
  } else {
    if (g.in_h < g.kh || g.in_w < g.kw)
      throw ShapeError("valid conv: kernel " + shape_string(kernel_shape) +
                       " larger than input " + shape_string(input_shape));
    g.out_h = (g.in_h - g.kh) / stride + 1;
    g.out_w = (g.in_w - g.kw) / stride + 1;
    g.pad_top = 0;
    g.pad_left = 0;
  }
  return g;
}

// Patch matrix [n*out_h*out_w, kh*kw*c]; out-of-bounds taps read as zero.
// Column order is (dy, dx, channel) with channel fastest, matching the
// row-major [kh,kw,c,f] kernel layout so conv is a single GEMM.
template <typename Scalar>
MatrixRM<Scalar> im2col(const Tensor<Scalar>& input, const ConvGeometry& g) {
  MatrixRM<Scalar> cols = MatrixRM<Scalar>::Zero(g.out_rows(), g.patch_len());
  const Index row_stride = g.in_w * g.in_c;
  for (Index n = 0; n < g.batch; ++n) {
    const Scalar* img = input.data() + n * g.in_h * row_stride;
    for (Index oy = 0; oy < g.out_h; ++oy) {
      const Index iy0 = oy * g.stride - g.pad_top;
      for (Index ox = 0; ox < g.out_w; ++ox) {
        const Index ix0 = ox * g.stride - g.pad_left;
        Scalar* patch = cols.data() + ((n * g.out_h + oy) * g.out_w + ox) * g.patch_len();
        for (Index dy = 0; dy < g.kh; ++dy) {
          const Index iy = iy0 + dy;
          if (iy < 0 || iy >= g.in_h) continue;
          const Index dx_lo = std::max<Index>(0, -ix0);
          const Index dx_hi = std::min<Index>(g.kw, g.in_w - ix0);
          if (dx_lo >= dx_hi) continue;
          std::copy(img + iy * row_stride + (ix0 + dx_lo) * g.in_c,
                    img + iy * row_stride + (ix0 + dx_hi) * g.in_c,
                    patch + (dy * g.kw + dx_lo) * g.in_c);
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatter-adds patch rows back into an [n,h,w,c] image.
template <typename Scalar>
void col2im_add(const MatrixRM<Scalar>& cols, const ConvGeometry& g, Tensor<Scalar>& image) {
  const Index row_stride = g.in_w * g.in_c;
  for (Index n = 0; n < g.batch; ++n) {
    Scalar* img = image.data() + n * g.in_h * row_stride;
    for (Index oy = 0; oy < g.out_h; ++oy) {
      const Index iy0 = oy * g.stride - g.pad_top;
      for (Index ox = 0; ox < g.out_w; ++ox) {
        const Index ix0 = ox * g.stride - g.pad_left;
        const Scalar* patch = cols.data() + ((n * g.out_h + oy) * g.out_w + ox) * g.patch_len();
        for (Index dy = 0; dy < g.kh; ++dy) {
          const Index iy = iy0 + dy;
          if (iy < 0 || iy >= g.in_h) continue;
          const Index dx_lo = std::max<Index>(0, -ix0);
          const Index dx_hi = std::min<Index>(g.kw, g.in_w - ix0);
          Scalar* dst = img + iy * row_stride + (ix0 + dx_lo) * g.in_c;
          const Scalar* src = patch + (dy * g.kw + dx_lo) * g.in_c;
          for (Index t = 0; t < (dx_hi - dx_lo) * g.in_c; ++t) dst[t] += src[t];
        }
      }
    }
  }
}

template <typename Scalar>
struct ConvGrads {
  Tensor<Scalar> d_input, d_kernels, d_bias;
};

// Strided 2-D cross-correlation. input [n,h,w,c], kernels [kh,kw,c,f], bias [f].
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernels,
                      const Tensor<Scalar>& bias, Index stride, Padding padding) {
  const ConvGeometry g = make_conv_geometry(input.shape(), kernels.shape(), stride, padding);
  if (bias.rank() != 1 || bias.dim(0) != g.filters)
    throw ShapeError("conv2d: bias must be [" + std::to_string(g.filters) + "], got " +
                     shape_string(bias.shape()));
  const MatrixRM<Scalar> patches = im2col(input, g);
  Tensor<Scalar> out({g.batch, g.out_h, g.out_w, g.filters});
  auto out_m = out.matrix(g.out_rows(), g.filters);
  out_m.noalias() = patches * kernels.matrix(g.patch_len(), g.filters);
  out_m.rowwise() += bias.vec().transpose();
  return out;
}

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernels,
                                  Index stride, Padding padding, const Tensor<Scalar>& upstream) {
  const ConvGeometry g = make_conv_geometry(input.shape(), kernels.shape(), stride, padding);
  const std::vector<Index> want{g.batch, g.out_h, g.out_w, g.filters};
  if (upstream.shape() != want)
    throw ShapeError("conv2d_backward: upstream " + shape_string(upstream.shape()) +
                     " does not match output " + shape_string(want));
  const MatrixRM<Scalar> patches = im2col(input, g);
  auto up = upstream.matrix(g.out_rows(), g.filters);

  ConvGrads<Scalar> grads{Tensor<Scalar>(input.shape()), Tensor<Scalar>(kernels.shape()),
                          Tensor<Scalar>({g.filters})};
  grads.d_kernels.matrix(g.patch_len(), g.filters).noalias() = patches.transpose() * up;
  grads.d_bias.vec() = up.colwise().sum();
  const MatrixRM<Scalar> d_patches = up * kernels.matrix(g.patch_len(), g.filters).transpose();
  col2im_add(d_patches, g, grads.d_input);
  return grads;
}

// Geometry for a transposed conv producing [n,out_h,out_w,c] from [n,h,w,f]:
// exactly the adjoint of the 'same'-padded stride-s conv going the other way,
// so h and w must equal ceil(out_h / stride) and ceil(out_w / stride).
inline ConvGeometry make_deconv_geometry(const std::vector<Index>& input_shape,
                                         const std::vector<Index>& kernel_shape, Index stride,
                                         Index out_h, Index out_w) {
  if (input_shape.size() != 4)
    throw ShapeError("deconv input must be [n,h,w,f], got " + shape_string(input_shape));
  if (kernel_shape.size() != 4)
    throw ShapeError("deconv kernels must be [kh,kw,c,f], got " + shape_string(kernel_shape));
  if (out_h < 1 || out_w < 1) throw ShapeError("deconv output extents must be >= 1");
  if (kernel_shape[3] != input_shape[3])
    throw ShapeError("deconv kernel filter count " + std::to_string(kernel_shape[3]) +
                     " does not match input channels " + std::to_string(input_shape[3]));
  const ConvGeometry g = make_conv_geometry({input_shape[0], out_h, out_w, kernel_shape[2]},
                                            kernel_shape, stride, Padding::kSame);
  if (g.out_h != input_shape[1] || g.out_w != input_shape[2])
    throw ShapeError("deconv: input " + shape_string(input_shape) + " inconsistent with output " +
                     std::to_string(out_h) + "x" + std::to_string(out_w) + " at stride " +
                     std::to_string(stride));
  return g;
}

// Transposed conv (fractionally strided): input [n,h,w,f], kernels [kh,kw,c,f],
// bias [c], output [n,out_h,out_w,c].
template <typename Scalar>
Tensor<Scalar> deconv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernels,
                        const Tensor<Scalar>& bias, Index stride, Index out_h, Index out_w) {
  const ConvGeometry g = make_deconv_geometry(input.shape(), kernels.shape(), stride, out_h, out_w);
  if (bias.rank() != 1 || bias.dim(0) != g.in_c)
    throw ShapeError("deconv2d: bias must be [" + std::to_string(g.in_c) + "], got " +
                     shape_string(bias.shape()));
  const MatrixRM<Scalar> d_patches =
      input.matrix(g.out_rows(), g.filters) * kernels.matrix(g.patch_len(), g.filters).transpose();
  Tensor<Scalar> out({g.batch, out_h, out_w, g.in_c});
  col2im_add(d_patches, g, out);
  out.matrix(g.batch * out_h * out_w, g.in_c).rowwise() += bias.vec().transpose();
  return out;
}

template <typename Scalar>
ConvGrads<Scalar> deconv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernels,
                                    Index stride, Index out_h, Index out_w,
                                    const Tensor<Scalar>& upstream) {
  const ConvGeometry g = make_deconv_geometry(input.shape(), kernels.shape(), stride, out_h, out_w);
  const std::vector<Index> want{g.batch, out_h, out_w, g.in_c};
  if (upstream.shape() != want)
    throw ShapeError("deconv2d_backward: upstream " + shape_string(upstream.shape()) +
                     " does not match output " + shape_string(want));
  // The forward pass is the adjoint of a conv, so its input gradient is that
  // conv applied to the upstream signal.
  const MatrixRM<Scalar> patches = im2col(upstream, g);
  ConvGrads<Scalar> grads{Tensor<Scalar>(input.shape()), Tensor<Scalar>(kernels.shape()),
                          Tensor<Scalar>({g.in_c})};
  grads.d_input.matrix(g.out_rows(), g.filters).noalias() =
      patches * kernels.matrix(g.patch_len(), g.filters);
  grads.d_kernels.matrix(g.patch_len(), g.filters).noalias() =
      patches.transpose() * input.matrix(g.out_rows(), g.filters);
  grads.d_bias.vec() = upstream.matrix(g.batch * out_h * out_w, g.in_c).colwise().sum();
  return grads;
}

}  // namespace dcec

#endif  // DCEC_NN_OPS_HPP
