#include "tgfuse/nn.hpp"

#include <cmath>

namespace tgfuse::nn {

namespace {

Parameter make_param(std::string name, Tensor value) {
  Parameter p;
  p.name = std::move(name);
  p.value = std::move(value);
  return p;
}

}  // namespace

Tensor activate(const Tensor& x, Activation act) {
  return act == Activation::Gelu ? gelu(x) : relu(x);
}

const char* to_string(Activation act) { return act == Activation::Gelu ? "gelu" : "relu"; }

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool with_bias)
    : weight(make_param(name + ".weight", init_glorot(in, out, rng))),
      bias(make_param(name + ".bias", Tensor::zeros({out}))),
      has_bias(with_bias) {}

Tensor Linear::operator()(Context& ctx, const Tensor& x) const {
  Tensor y = matmul(x, ctx(weight));
  return has_bias ? add_bias(y, ctx(bias)) : y;
}

void Linear::collect(ParameterList& out) {
  out.push_back(&weight);
  if (has_bias) out.push_back(&bias);
}

LayerNorm::LayerNorm(const std::string& name, std::size_t dim)
    : gain(make_param(name + ".gain", Tensor::filled({dim}, 1.0))),
      bias(make_param(name + ".bias", Tensor::zeros({dim}))) {}

Tensor LayerNorm::operator()(Context& ctx, const Tensor& x) const {
  return layer_norm(x, ctx(gain), ctx(bias), eps);
}

void LayerNorm::collect(ParameterList& out) {
  out.push_back(&gain);
  out.push_back(&bias);
}

AttentionBlock::AttentionBlock(const std::string& name, std::size_t dim, std::size_t heads,
                               Rng& rng, bool causal)
    : dim(dim), heads(heads), causal(causal) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError(name + ": dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  wq = make_param(name + ".wq", init_glorot(dim, dim, rng));
  wk = make_param(name + ".wk", init_glorot(dim, dim, rng));
  wv = make_param(name + ".wv", init_glorot(dim, dim, rng));
  wo = make_param(name + ".wo", init_glorot(dim, dim, rng));
}

void AttentionBlock::collect(ParameterList& out) {
  out.insert(out.end(), {&wq, &wk, &wv, &wo});
}

Tensor attn(Context& ctx, const Tensor& q, const Tensor& k, const Tensor& v,
            const AttentionBlock& block) {
  if (q.cols() != block.dim || k.cols() != block.dim || v.cols() != block.dim) {
    throw ShapeError("attn: inputs " + tgfuse::to_string(q.shape()) + ", " + tgfuse::to_string(k.shape()) + ", " +
                     tgfuse::to_string(v.shape()) + " do not match block dim " + std::to_string(block.dim));
  }
  const Tensor Q = matmul(q, ctx(block.wq));
  const Tensor K = matmul(k, ctx(block.wk));
  const Tensor V = matmul(v, ctx(block.wv));
  return matmul(scaled_dot_attention(Q, K, V, block.heads, block.causal), ctx(block.wo));
}

FeedForward::FeedForward(const std::string& name, std::size_t dim, std::size_t hidden,
                         Activation act, Rng& rng)
    : fc1(name + ".fc1", dim, hidden, rng), fc2(name + ".fc2", hidden, dim, rng), activation(act) {}

void FeedForward::collect(ParameterList& out) {
  fc1.collect(out);
  fc2.collect(out);
}

Tensor feed_forward(Context& ctx, const Tensor& x, const FeedForward& block) {
  return block.fc2(ctx, activate(block.fc1(ctx, x), block.activation));
}

Tensor sincos_2d(std::size_t rows, std::size_t cols, std::size_t dim) {
  if (dim % 4 != 0) throw ConfigError("sincos_2d: dim " + std::to_string(dim) + " is not a multiple of 4");
  const std::size_t quarter = dim / 4;
  std::vector<double> v(rows * cols * dim);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double* row = v.data() + (r * cols + c) * dim;
      for (std::size_t k = 0; k < quarter; ++k) {
        const double omega = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(quarter));
        row[k] = std::sin(r * omega);
        row[quarter + k] = std::cos(r * omega);
        row[2 * quarter + k] = std::sin(c * omega);
        row[3 * quarter + k] = std::cos(c * omega);
      }
    }
  }
  return Tensor({rows * cols, dim}, std::move(v));
}

PatchEmbed::PatchEmbed(const std::string& name, std::size_t height, std::size_t width,
                       std::size_t channels, std::size_t patch, std::size_t dim, Rng& rng)
    : height(height), width(width), channels(channels), patch(patch), dim(dim) {
  if (patch == 0 || height % patch != 0 || width % patch != 0) {
    throw ConfigError(name + ": patch " + std::to_string(patch) + " does not divide " +
                      std::to_string(height) + "x" + std::to_string(width));
  }
  proj = Linear(name + ".proj", patch * patch * channels, dim, rng);
  pos = make_param(name + ".pos", sincos_2d(height / patch, width / patch, dim));
}

void PatchEmbed::collect(ParameterList& out) {
  proj.collect(out);
  out.push_back(&pos);
}

Tensor patch_embed(Context& ctx, const Tensor& image, const PatchEmbed& block) {
  if (image.rank() != 3 || image.dim(0) != block.height || image.dim(1) != block.width ||
      image.dim(2) != block.channels) {
    throw ShapeError("patch_embed: image " + tgfuse::to_string(image.shape()) + " does not match [" +
                      std::to_string(block.height) + "," + std::to_string(block.width) + "," +
                      std::to_string(block.channels) + "]");
  }
  return add(block.proj(ctx, patchify(image, block.patch)), ctx(block.pos));
}

UpConv2x::UpConv2x(const std::string& name, std::size_t in_channels, Rng& rng)
    : in_channels(in_channels) {
  if (in_channels < 2 || in_channels % 2 != 0) {
    throw ConfigError(name + ": channel count " + std::to_string(in_channels) + " must be even");
  }
  const std::size_t out = in_channels / 2;
  const double bound = std::sqrt(6.0 / static_cast<double>(in_channels + out));
  weight = make_param(name + ".weight", init_uniform({in_channels, 4 * out}, bound, rng));
  bias = make_param(name + ".bias", Tensor::zeros({out}));
}

void UpConv2x::collect(ParameterList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

Tensor upconv2x(Context& ctx, const Tensor& x, const UpConv2x& block) {
  if (x.rank() != 3) throw ShapeError("upconv2x: expected [H, W, C], got " + tgfuse::to_string(x.shape()));
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (C % 2 != 0) throw ConfigError("upconv2x: odd channel count " + std::to_string(C));
  if (C != block.in_channels) {
    throw ShapeError("upconv2x: input has " + std::to_string(C) + " channels, block expects " +
                     std::to_string(block.in_channels));
  }
  const Tensor taps = matmul(x.reshape({H * W, C}), ctx(block.weight));
  const Tensor up = add_bias(depth_to_space(taps, H, W), ctx(block.bias));
  return up.reshape({2 * H, 2 * W, C / 2});
}

TransformerLayer::TransformerLayer(const std::string& name, std::size_t dim, std::size_t heads,
                                   std::size_t hidden, bool causal, Rng& rng)
    : norm1(name + ".norm1", dim),
      attention(name + ".attn", dim, heads, rng, causal),
      norm2(name + ".norm2", dim),
      ffn(name + ".ffn", dim, hidden, Activation::Gelu, rng) {}

Tensor TransformerLayer::operator()(Context& ctx, const Tensor& x) const {
  const Tensor h = norm1(ctx, x);
  const Tensor y = add(x, attn(ctx, h, h, h, attention));
  return add(y, feed_forward(ctx, norm2(ctx, y), ffn));
}

void TransformerLayer::collect(ParameterList& out) {
  norm1.collect(out);
  attention.collect(out);
  norm2.collect(out);
  ffn.collect(out);
}

}  // namespace tgfuse::nn
