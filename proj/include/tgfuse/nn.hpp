#pragma once

#include <cstddef>
#include <string>

#include "tgfuse/ops.hpp"
#include "tgfuse/parameter.hpp"

namespace tgfuse::nn {

enum class Activation { Gelu, Relu };

Tensor activate(const Tensor& x, Activation act);
const char* to_string(Activation act);

/// y = x W + b with W stored [in, out].
struct Linear {
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);

  Tensor operator()(Context& ctx, const Tensor& x) const;
  void collect(ParameterList& out);

  Parameter weight;
  Parameter bias;
  bool has_bias = true;
};

struct LayerNorm {
  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim);

  Tensor operator()(Context& ctx, const Tensor& x) const;
  void collect(ParameterList& out);

  Parameter gain;
  Parameter bias;
  double eps = 1e-5;
};

/// Multi-head attention with bias-free d x d projections Wq, Wk, Wv, Wo.
struct AttentionBlock {
  AttentionBlock() = default;
  AttentionBlock(const std::string& name, std::size_t dim, std::size_t heads, Rng& rng,
                 bool causal = false);

  void collect(ParameterList& out);

  std::size_t dim = 0;
  std::size_t heads = 1;
  bool causal = false;
  Parameter wq, wk, wv, wo;
};

/// Attention of queries `q` [Lq x d] over keys `k` and values `v` [Lk x d].
/// Output has the query shape.
Tensor attn(Context& ctx, const Tensor& q, const Tensor& k, const Tensor& v,
            const AttentionBlock& block);

/// W2 act(W1 x + b1) + b2, hidden width `hidden`.
struct FeedForward {
  FeedForward() = default;
  FeedForward(const std::string& name, std::size_t dim, std::size_t hidden, Activation act,
              Rng& rng);

  void collect(ParameterList& out);

  Linear fc1;
  Linear fc2;
  Activation activation = Activation::Gelu;
};

Tensor feed_forward(Context& ctx, const Tensor& x, const FeedForward& block);

/// Fixed 2-D sine/cosine table for a rows x cols grid, row-major. The first half
/// of the channels encodes the row index, the second half the column index.
Tensor sincos_2d(std::size_t rows, std::size_t cols, std::size_t dim);

/// Linear projection of non-overlapping p x p x C patches plus a learned
/// positional table, one row per patch, initialised with sincos_2d.
struct PatchEmbed {
  PatchEmbed() = default;
  PatchEmbed(const std::string& name, std::size_t height, std::size_t width, std::size_t channels,
             std::size_t patch, std::size_t dim, Rng& rng);

  std::size_t tokens() const noexcept { return (height / patch) * (width / patch); }
  void collect(ParameterList& out);

  std::size_t height = 0, width = 0, channels = 1, patch = 1, dim = 0;
  Linear proj;
  Parameter pos;
};

Tensor patch_embed(Context& ctx, const Tensor& image, const PatchEmbed& block);

/// Stride-2, kernel-2 transposed convolution that doubles the spatial size and
/// halves the channel count. Weight layout [C, (dy*2+dx)*C/2 + c_out].
struct UpConv2x {
  UpConv2x() = default;
  UpConv2x(const std::string& name, std::size_t in_channels, Rng& rng);

  std::size_t out_channels() const noexcept { return in_channels / 2; }
  void collect(ParameterList& out);

  std::size_t in_channels = 0;
  Parameter weight;
  Parameter bias;
};

/// [H, W, C] -> [2H, 2W, C/2].
Tensor upconv2x(Context& ctx, const Tensor& x, const UpConv2x& block);

/// Pre-norm transformer layer: x + attn(LN(x)), then x + FFN(LN(x)).
struct TransformerLayer {
  TransformerLayer() = default;
  TransformerLayer(const std::string& name, std::size_t dim, std::size_t heads, std::size_t hidden,
                   bool causal, Rng& rng);

  Tensor operator()(Context& ctx, const Tensor& x) const;
  void collect(ParameterList& out);

  LayerNorm norm1;
  AttentionBlock attention;
  LayerNorm norm2;
  FeedForward ffn;
};

}  // namespace tgfuse::nn
