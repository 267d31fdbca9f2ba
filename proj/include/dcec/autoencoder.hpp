#ifndef DCEC_AUTOENCODER_HPP
#define DCEC_AUTOENCODER_HPP

#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "dcec/adamax.hpp"
#include "dcec/batching.hpp"
#include "dcec/nn_ops.hpp"
#include "dcec/tensor.hpp"

namespace dcec {

struct ConvSpec {
  Index filters = 0;
  Index kernel = 0;
  Index stride = 0;

  bool operator==(const ConvSpec&) const = default;
};

// Convolutional autoencoder layout: three strided conv+ELU encoder layers
// into a linear dense embedding, mirrored back by dense+ELU and three
// transposed convs (last one linear, back to `channels`).
struct CaeArchitecture {
  Index input_size = 128;
  Index channels = 3;
  std::array<ConvSpec, 3> conv_specs{{{32, 5, 2}, {64, 5, 2}, {128, 3, 2}}};
  Index embed_dim = 32;
  float elu_alpha = 1.0f;

  bool operator==(const CaeArchitecture&) const = default;

  void validate() const {
    if (channels < 1) throw ShapeError("architecture: channels must be >= 1");
    if (embed_dim < 1) throw ShapeError("architecture: embed_dim must be >= 1");
    Index spatial = input_size;
    for (const ConvSpec& c : conv_specs) {
      if (c.filters < 1 || c.kernel < 1 || c.stride < 1)
        throw ShapeError("architecture: conv spec entries must be >= 1");
      if (spatial % c.stride != 0 || spatial / c.stride < 1)
        throw ShapeError("architecture: input_size " + std::to_string(input_size) +
                         " is not divisible through the stride chain");
      spatial /= c.stride;
    }
  }

  // Spatial size after the first `depth` encoder layers (depth 0 = input).
  Index spatial_at(std::size_t depth) const {
    Index s = input_size;
    for (std::size_t i = 0; i < depth; ++i) s /= conv_specs[i].stride;
    return s;
  }
  Index bottleneck_spatial() const { return spatial_at(conv_specs.size()); }
  Index flatten_dim() const {
    return bottleneck_spatial() * bottleneck_spatial() * conv_specs.back().filters;
  }
};

template <typename Scalar>
struct ConvLayer {
  Tensor<Scalar> kernels;  // [kh, kw, channels_out_of_conv_input_side, filters]
  Tensor<Scalar> bias;
};

template <typename Scalar>
struct CaeModel;

template <typename Scalar = float>
CaeModel<Scalar> make_model_shell(const CaeArchitecture& arch);

template <typename Scalar>
struct CaeModel {
  CaeArchitecture arch;
  std::array<ConvLayer<Scalar>, 3> enc_conv;
  Tensor<Scalar> embed_weights, embed_bias;  // [flatten, embed], [embed]
  Tensor<Scalar> dec_weights, dec_bias;      // [embed, flatten], [flatten]
  std::array<ConvLayer<Scalar>, 3> dec_conv;

  // Canonical parameter order shared by gradients, optimizer state and
  // checkpoints: encoder convs, embedding dense, decoder dense, decoder convs.
  template <typename Fn>
  void for_each_param(Fn&& fn) {
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string tag = "enc/conv" + std::to_string(i);
      fn(tag + "/kernel", enc_conv[i].kernels);
      fn(tag + "/bias", enc_conv[i].bias);
    }
    fn("enc/embed/weight", embed_weights);
    fn("enc/embed/bias", embed_bias);
    fn("dec/dense/weight", dec_weights);
    fn("dec/dense/bias", dec_bias);
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string tag = "dec/deconv" + std::to_string(i);
      fn(tag + "/kernel", dec_conv[i].kernels);
      fn(tag + "/bias", dec_conv[i].bias);
    }
  }
  template <typename Fn>
  void for_each_param(Fn&& fn) const {
    const_cast<CaeModel*>(this)->for_each_param(
        [&](const std::string& name, Tensor<Scalar>& t) { fn(name, std::as_const(t)); });
  }

  std::vector<Tensor<Scalar>*> params() {
    std::vector<Tensor<Scalar>*> out;
    for_each_param([&](const std::string&, Tensor<Scalar>& t) { out.push_back(&t); });
    return out;
  }
  std::vector<Tensor<Scalar>*> encoder_params() {
    std::vector<Tensor<Scalar>*> out;
    for_each_param([&](const std::string& name, Tensor<Scalar>& t) {
      if (name.rfind("enc/", 0) == 0) out.push_back(&t);
    });
    return out;
  }

  template <typename T>
  CaeModel<T> cast() const {
    CaeModel<T> out = make_model_shell<T>(arch);
    auto src = const_cast<CaeModel*>(this)->params();
    auto dst = out.params();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<T>();
    return out;
  }
};

// Decoder deconv layer i consumes the filters of encoder layer 2-i and
// produces the channel count one step earlier in the encoder stack.
inline std::vector<Index> deconv_kernel_shape(const CaeArchitecture& arch, std::size_t i) {
  const ConvSpec& mirrored = arch.conv_specs[2 - i];
  const Index out_ch = i < 2 ? arch.conv_specs[1 - i].filters : arch.channels;
  return {mirrored.kernel, mirrored.kernel, out_ch, mirrored.filters};
}

// All parameter tensors allocated (zero-valued) with architecture-determined shapes.
template <typename Scalar>
CaeModel<Scalar> make_model_shell(const CaeArchitecture& arch) {
  arch.validate();
  CaeModel<Scalar> model;
  model.arch = arch;
  Index in_ch = arch.channels;
  for (std::size_t i = 0; i < 3; ++i) {
    const ConvSpec& c = arch.conv_specs[i];
    model.enc_conv[i].kernels = Tensor<Scalar>({c.kernel, c.kernel, in_ch, c.filters});
    model.enc_conv[i].bias = Tensor<Scalar>({c.filters});
    in_ch = c.filters;
  }
  model.embed_weights = Tensor<Scalar>({arch.flatten_dim(), arch.embed_dim});
  model.embed_bias = Tensor<Scalar>({arch.embed_dim});
  model.dec_weights = Tensor<Scalar>({arch.embed_dim, arch.flatten_dim()});
  model.dec_bias = Tensor<Scalar>({arch.flatten_dim()});
  for (std::size_t i = 0; i < 3; ++i) {
    const std::vector<Index> kshape = deconv_kernel_shape(arch, i);
    model.dec_conv[i].kernels = Tensor<Scalar>(kshape);
    model.dec_conv[i].bias = Tensor<Scalar>({kshape[2]});
  }
  return model;
}

// Glorot-uniform weights (zero biases), drawn in a fixed parameter order so a
// seed fully determines the model.
template <typename Scalar = float>
CaeModel<Scalar> build_model(const CaeArchitecture& arch, std::uint64_t seed) {
  CaeModel<Scalar> model = make_model_shell<Scalar>(arch);
  std::mt19937 rng(static_cast<std::uint32_t>(seed ^ (seed >> 32)));
  model.for_each_param([&](const std::string& name, Tensor<Scalar>& t) {
    if (name.ends_with("/bias")) return;
    Index fan_in, fan_out;
    if (t.rank() == 4) {
      const Index taps = t.dim(0) * t.dim(1);
      fan_in = taps * t.dim(2);
      fan_out = taps * t.dim(3);
    } else {
      fan_in = t.dim(0);
      fan_out = t.dim(1);
    }
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(dist(rng));
  });
  return model;
}

// Intermediate activations kept for the backward pass.
template <typename Scalar>
struct CaeForward {
  Tensor<Scalar> input;
  std::array<Tensor<Scalar>, 3> enc_pre, enc_act;
  Tensor<Scalar> embedding;
  Tensor<Scalar> dec_dense_pre, dec_dense_act;
  std::array<Tensor<Scalar>, 3> dec_pre, dec_act;  // dec_pre[2] is the linear output
};

template <typename Scalar>
Tensor<Scalar> encode(const CaeModel<Scalar>& model, const Tensor<Scalar>& batch,
                      CaeForward<Scalar>* cache = nullptr) {
  const CaeArchitecture& a = model.arch;
  const std::vector<Index> want{batch.rank() == 4 ? batch.dim(0) : -1, a.input_size, a.input_size,
                                a.channels};
  if (batch.rank() != 4 || batch.shape() != want)
    throw ShapeError("encode: batch " + shape_string(batch.shape()) + " does not match " +
                     shape_string({-1, a.input_size, a.input_size, a.channels}));
  const Scalar alpha = static_cast<Scalar>(a.elu_alpha);

  Tensor<Scalar> x = batch;
  if (cache) cache->input = batch;
  for (std::size_t i = 0; i < 3; ++i) {
    Tensor<Scalar> pre = conv2d(x, model.enc_conv[i].kernels, model.enc_conv[i].bias,
                                a.conv_specs[i].stride, Padding::kSame);
    Tensor<Scalar> act = elu(pre, alpha);
    if (cache) {
      cache->enc_pre[i] = pre;
      cache->enc_act[i] = act;
    }
    x = std::move(act);
  }
  Tensor<Scalar> z =
      dense(x.reshaped({x.dim(0), a.flatten_dim()}), model.embed_weights, model.embed_bias);
  if (cache) cache->embedding = z;
  return z;
}

template <typename Scalar>
Tensor<Scalar> decode(const CaeModel<Scalar>& model, const Tensor<Scalar>& z,
                      CaeForward<Scalar>* cache = nullptr) {
  const CaeArchitecture& a = model.arch;
  if (z.rank() != 2 || z.dim(1) != a.embed_dim)
    throw ShapeError("decode: embedding " + shape_string(z.shape()) + " does not match width " +
                     std::to_string(a.embed_dim));
  const Scalar alpha = static_cast<Scalar>(a.elu_alpha);
  const Index n = z.dim(0);
  const Index s8 = a.bottleneck_spatial();

  Tensor<Scalar> pre = dense(z, model.dec_weights, model.dec_bias);
  Tensor<Scalar> act = elu(pre, alpha);
  if (cache) {
    cache->dec_dense_pre = pre;
    cache->dec_dense_act = act;
  }
  Tensor<Scalar> x = act.reshaped({n, s8, s8, a.conv_specs.back().filters});
  for (std::size_t i = 0; i < 3; ++i) {
    const Index out_spatial = a.spatial_at(2 - i);
    Tensor<Scalar> d = deconv2d(x, model.dec_conv[i].kernels, model.dec_conv[i].bias,
                                a.conv_specs[2 - i].stride, out_spatial, out_spatial);
    Tensor<Scalar> dact = i < 2 ? elu(d, alpha) : d;
    if (cache) {
      cache->dec_pre[i] = d;
      cache->dec_act[i] = dact;
    }
    x = std::move(dact);
  }
  return x;
}

// Gradients in the same canonical order as CaeModel::for_each_param.
template <typename Scalar>
struct CaeGrads {
  std::array<ConvLayer<Scalar>, 3> enc_conv;
  Tensor<Scalar> embed_weights, embed_bias;
  Tensor<Scalar> dec_weights, dec_bias;
  std::array<ConvLayer<Scalar>, 3> dec_conv;

  std::vector<const Tensor<Scalar>*> list() const {
    std::vector<const Tensor<Scalar>*> out;
    for (std::size_t i = 0; i < 3; ++i) {
      out.push_back(&enc_conv[i].kernels);
      out.push_back(&enc_conv[i].bias);
    }
    out.push_back(&embed_weights);
    out.push_back(&embed_bias);
    out.push_back(&dec_weights);
    out.push_back(&dec_bias);
    for (std::size_t i = 0; i < 3; ++i) {
      out.push_back(&dec_conv[i].kernels);
      out.push_back(&dec_conv[i].bias);
    }
    return out;
  }
  std::vector<const Tensor<Scalar>*> encoder_list() const {
    std::vector<const Tensor<Scalar>*> out;
    for (std::size_t i = 0; i < 3; ++i) {
      out.push_back(&enc_conv[i].kernels);
      out.push_back(&enc_conv[i].bias);
    }
    out.push_back(&embed_weights);
    out.push_back(&embed_bias);
    return out;
  }
};

// Backpropagates d_output (gradient w.r.t. the reconstruction, may be null)
// and d_embedding (extra gradient injected at the bottleneck, may be null)
// through the whole model. `fwd` must come from encode+decode with caching;
// decoder gradients are zero when d_output is null (decoder not traversed).
template <typename Scalar>
CaeGrads<Scalar> cae_backward(const CaeModel<Scalar>& model, const CaeForward<Scalar>& fwd,
                              const std::type_identity_t<Tensor<Scalar>>* d_output,
                              const std::type_identity_t<Tensor<Scalar>>* d_embedding) {
  const CaeArchitecture& a = model.arch;
  const Scalar alpha = static_cast<Scalar>(a.elu_alpha);
  const Index n = fwd.embedding.dim(0);

  CaeGrads<Scalar> g;
  for (std::size_t i = 0; i < 3; ++i) {
    g.enc_conv[i].kernels = Tensor<Scalar>(model.enc_conv[i].kernels.shape());
    g.enc_conv[i].bias = Tensor<Scalar>(model.enc_conv[i].bias.shape());
    g.dec_conv[i].kernels = Tensor<Scalar>(model.dec_conv[i].kernels.shape());
    g.dec_conv[i].bias = Tensor<Scalar>(model.dec_conv[i].bias.shape());
  }
  g.embed_weights = Tensor<Scalar>(model.embed_weights.shape());
  g.embed_bias = Tensor<Scalar>(model.embed_bias.shape());
  g.dec_weights = Tensor<Scalar>(model.dec_weights.shape());
  g.dec_bias = Tensor<Scalar>(model.dec_bias.shape());

  Tensor<Scalar> d_z({n, a.embed_dim});
  if (d_output) {
    Tensor<Scalar> u = *d_output;
    for (int i = 2; i >= 0; --i) {
      // Layer 2 is linear; layers below it sit behind an ELU.
      if (i < 2) u = elu_backward(fwd.dec_pre[static_cast<std::size_t>(i)], u, alpha);
      Tensor<Scalar> layer_in =
          i == 0 ? fwd.dec_dense_act.reshaped({n, a.bottleneck_spatial(), a.bottleneck_spatial(),
                                               a.conv_specs.back().filters})
                 : fwd.dec_act[static_cast<std::size_t>(i - 1)];
      const Index out_spatial = a.spatial_at(static_cast<std::size_t>(2 - i));
      ConvGrads<Scalar> cg =
          deconv2d_backward(layer_in, model.dec_conv[static_cast<std::size_t>(i)].kernels,
                            a.conv_specs[static_cast<std::size_t>(2 - i)].stride, out_spatial,
                            out_spatial, u);
      g.dec_conv[static_cast<std::size_t>(i)].kernels = std::move(cg.d_kernels);
      g.dec_conv[static_cast<std::size_t>(i)].bias = std::move(cg.d_bias);
      u = std::move(cg.d_input);
    }
    Tensor<Scalar> d_flat =
        elu_backward(fwd.dec_dense_pre, u.reshaped({n, a.flatten_dim()}), alpha);
    DenseGrads<Scalar> dg = dense_backward(fwd.embedding, model.dec_weights, d_flat);
    g.dec_weights = std::move(dg.d_weights);
    g.dec_bias = std::move(dg.d_bias);
    d_z.vec() = dg.d_input.vec();
  }
  if (d_embedding) {
    if (d_embedding->shape() != d_z.shape())
      throw ShapeError("cae_backward: embedding gradient shape mismatch");
    d_z.vec() += d_embedding->vec();
  }

  DenseGrads<Scalar> eg = dense_backward(
      fwd.enc_act[2].reshaped({n, a.flatten_dim()}), model.embed_weights, d_z);
  g.embed_weights = std::move(eg.d_weights);
  g.embed_bias = std::move(eg.d_bias);
  Tensor<Scalar> u = eg.d_input.reshaped(fwd.enc_act[2].shape());
  for (int i = 2; i >= 0; --i) {
    u = elu_backward(fwd.enc_pre[static_cast<std::size_t>(i)], u, alpha);
    const Tensor<Scalar>& layer_in =
        i == 0 ? fwd.input : fwd.enc_act[static_cast<std::size_t>(i - 1)];
    ConvGrads<Scalar> cg =
        conv2d_backward(layer_in, model.enc_conv[static_cast<std::size_t>(i)].kernels,
                        a.conv_specs[static_cast<std::size_t>(i)].stride, Padding::kSame, u);
    g.enc_conv[static_cast<std::size_t>(i)].kernels = std::move(cg.d_kernels);
    g.enc_conv[static_cast<std::size_t>(i)].bias = std::move(cg.d_bias);
    u = std::move(cg.d_input);
  }
  return g;
}

// Mean squared error over every element of the batch.
template <typename Scalar>
double reconstruction_loss(const Tensor<Scalar>& x_hat, const Tensor<Scalar>& x) {
  if (x_hat.shape() != x.shape())
    throw ShapeError("reconstruction_loss: " + shape_string(x_hat.shape()) + " vs " +
                     shape_string(x.shape()));
  return (x_hat.vec().template cast<double>() - x.vec().template cast<double>()).squaredNorm() /
         static_cast<double>(x.size());
}

// d/dx_hat of reconstruction_loss, scaled by `weight`.
template <typename Scalar>
Tensor<Scalar> reconstruction_loss_grad(const Tensor<Scalar>& x_hat, const Tensor<Scalar>& x,
                                        Scalar weight = Scalar(1)) {
  Tensor<Scalar> g(x_hat.shape());
  g.vec() = (x_hat.vec() - x.vec()) * (Scalar(2) * weight / static_cast<Scalar>(x.size()));
  return g;
}

// Embeddings of a whole image tensor, processed in batches.
template <typename Scalar>
Tensor<Scalar> encode_all(const CaeModel<Scalar>& model, const Tensor<Scalar>& images,
                          Index batch_size) {
  const Index n = images.dim(0);
  Tensor<Scalar> z({n, model.arch.embed_dim});
  for (const auto& batch : epoch_batches(n, batch_size, /*shuffle=*/false, 0, 0)) {
    Tensor<Scalar> zb = encode(model, gather_rows(images, batch));
    for (std::size_t r = 0; r < batch.size(); ++r)
      z.matrix().row(batch[r]) = zb.matrix().row(static_cast<Index>(r));
  }
  return z;
}

// Reconstruction-only training; returns the per-epoch mean loss curve.
template <typename Scalar>
std::vector<double> pretrain(CaeModel<Scalar>& model, const Tensor<Scalar>& images, int epochs,
                             Index batch_size, std::uint64_t seed,
                             AdamaxState<Scalar>* opt_state = nullptr) {
  if (images.rank() != 4 || images.dim(0) < 1)
    throw ShapeError("pretrain: images must be a non-empty [n,s,s,c] tensor");
  if (epochs < 0) throw ShapeError("pretrain: negative epoch count");
  const Index n = images.dim(0);

  const std::vector<Tensor<Scalar>*> params = model.params();
  AdamaxState<Scalar> local(params);
  AdamaxState<Scalar>& opt = opt_state ? *opt_state : local;
  if (opt.m.empty()) opt = AdamaxState<Scalar>(params, opt.config);

  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(epochs));
  for (int epoch = 0; epoch < epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (const auto& batch : epoch_batches(n, batch_size, /*shuffle=*/true, seed, epoch)) {
      const Tensor<Scalar> xb = gather_rows(images, batch);
      CaeForward<Scalar> fwd;
      const Tensor<Scalar> z = encode(model, xb, &fwd);
      const Tensor<Scalar> x_hat = decode(model, z, &fwd);
      epoch_loss += reconstruction_loss(x_hat, xb) * static_cast<double>(batch.size());
      const Tensor<Scalar> d_out = reconstruction_loss_grad(x_hat, xb);
      const CaeGrads<Scalar> grads = cae_backward(model, fwd, &d_out, nullptr);
      adamax_step(params, grads.list(), opt);
    }
    epoch_loss /= static_cast<double>(n);
    if (!std::isfinite(epoch_loss))
      throw NumericError("pretrain: loss diverged at epoch " + std::to_string(epoch));
    history.push_back(epoch_loss);
  }
  return history;
}

}  // namespace dcec

#endif  // DCEC_AUTOENCODER_HPP
