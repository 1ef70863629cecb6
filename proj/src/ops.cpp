#include "tgfuse/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace tgfuse {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap view(std::span<const double> data, std::size_t rows, std::size_t cols) {
  return ConstMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap view(std::vector<double>& data, std::size_t rows, std::size_t cols) {
  return MutMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

void apply_fault(std::string_view op, GradSlots dx) {
  const double f = debug::backward_fault(op);
  if (f == 1.0) return;
  for (auto* g : dx) {
    if (!g) continue;
    for (double& v : *g) v *= f;
  }
}

template <typename Fn, typename Deriv>
Tensor elementwise(const Tensor& x, Fn fn, Deriv deriv, std::string_view name) {
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(in[i]);
  return detail::emit(x.shape(), std::move(out), {x},
                      [x, deriv, name](std::span<const double> dy, GradSlots dx) {
                        if (!dx[0]) return;
                        const auto in = x.data();
                        auto& g = *dx[0];
                        // Fault is applied to this op's own contribution only.
                        const double f = debug::backward_fault(name);
                        for (std::size_t i = 0; i < dy.size(); ++i) g[i] += f * dy[i] * deriv(in[i]);
                      });
}

struct Fault {
  std::string op;
  double factor = 1.0;
};

Fault& fault_state() {
  static Fault state;
  return state;
}

}  // namespace

namespace debug {

void inject_backward_fault(const std::string& op, double factor) {
  fault_state() = Fault{op, op.empty() ? 1.0 : factor};
}

double backward_fault(std::string_view op) {
  const Fault& f = fault_state();
  return (!f.op.empty() && f.op == op) ? f.factor : 1.0;
}

}  // namespace debug

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  view(out, m, n).noalias() = view(a.data(), m, k) * view(b.data(), k, n);
  return detail::emit({m, n}, std::move(out), {a, b},
                      [a, b, m, k, n](std::span<const double> dy, GradSlots dx) {
                        const auto g = view(dy, m, n);
                        if (dx[0]) view(*dx[0], m, k).noalias() += g * view(b.data(), k, n).transpose();
                        if (dx[1]) view(*dx[1], k, n).noalias() += view(a.data(), m, k).transpose() * g;
                        apply_fault("matmul", dx);
                      });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  view(out, n, m) = view(a.data(), m, n).transpose();
  return detail::emit({n, m}, std::move(out), {a}, [m, n](std::span<const double> dy, GradSlots dx) {
    if (dx[0]) view(*dx[0], m, n) += view(dy, n, m).transpose();
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return detail::emit(a.shape(), std::move(out), {a, b}, [](std::span<const double> dy, GradSlots dx) {
    for (auto* g : dx) {
      if (!g) continue;
      for (std::size_t i = 0; i < dy.size(); ++i) (*g)[i] += dy[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return detail::emit(a.shape(), std::move(out), {a, b}, [](std::span<const double> dy, GradSlots dx) {
    if (dx[0]) for (std::size_t i = 0; i < dy.size(); ++i) (*dx[0])[i] += dy[i];
    if (dx[1]) for (std::size_t i = 0; i < dy.size(); ++i) (*dx[1])[i] -= dy[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return detail::emit(a.shape(), std::move(out), {a, b},
                      [a, b](std::span<const double> dy, GradSlots dx) {
                        const auto x = a.data(), y = b.data();
                        if (dx[0]) for (std::size_t i = 0; i < dy.size(); ++i) (*dx[0])[i] += dy[i] * y[i];
                        if (dx[1]) for (std::size_t i = 0; i < dy.size(); ++i) (*dx[1])[i] += dy[i] * x[i];
                      });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * factor;
  return detail::emit(x.shape(), std::move(out), {x},
                      [factor](std::span<const double> dy, GradSlots dx) {
                        if (!dx[0]) return;
                        for (std::size_t i = 0; i < dy.size(); ++i) (*dx[0])[i] += dy[i] * factor;
                      });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t r = x.rows(), c = x.cols();
  if (bias.size() != c) {
    throw ShapeError("add_bias: bias " + to_string(bias.shape()) + " does not match " +
                     to_string(x.shape()));
  }
  std::vector<double> out(x.size());
  const auto in = x.data(), b = bias.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = in[i * c + j] + b[j];
  return detail::emit(x.shape(), std::move(out), {x, bias},
                      [r, c](std::span<const double> dy, GradSlots dx) {
                        if (dx[0]) for (std::size_t i = 0; i < dy.size(); ++i) (*dx[0])[i] += dy[i];
                        if (dx[1]) {
                          auto& g = *dx[1];
                          for (std::size_t i = 0; i < r; ++i)
                            for (std::size_t j = 0; j < c; ++j) g[j] += dy[i * c + j];
                        }
                      });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return detail::emit({}, {total}, {x}, [](std::span<const double> dy, GradSlots dx) {
    if (!dx[0]) return;
    for (double& g : *dx[0]) g += dy[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.empty()) throw ShapeError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor relu(const Tensor& x) {
  return elementwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; },
      "relu");
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt_2pi = 0.39894228040143267794;
  return elementwise(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [](double v) {
        return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      },
      "gelu");
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-in[i]));
  auto saved = std::make_shared<const std::vector<double>>(out);
  return detail::emit(x.shape(), std::move(out), {x},
                      [saved](std::span<const double> dy, GradSlots dx) {
                        if (!dx[0]) return;
                        const auto& y = *saved;
                        for (std::size_t i = 0; i < dy.size(); ++i) (*dx[0])[i] += dy[i] * y[i] * (1.0 - y[i]);
                      });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " + to_string(x.shape()));
  }
  const auto& s = x.shape();
  const std::size_t n = s[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];

  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, in[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(in[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= z;
    }
  }
  auto saved = std::make_shared<const std::vector<double>>(out);
  return detail::emit(s, std::move(out), {x},
                      [saved, outer, inner, n](std::span<const double> dy, GradSlots dx) {
                        if (!dx[0]) return;
                        const auto& y = *saved;
                        auto& g = *dx[0];
                        const double f = debug::backward_fault("softmax");
                        for (std::size_t o = 0; o < outer; ++o) {
                          for (std::size_t i = 0; i < inner; ++i) {
                            const std::size_t base = o * n * inner + i;
                            double dot = 0.0;
                            for (std::size_t j = 0; j < n; ++j) dot += dy[base + j * inner] * y[base + j * inner];
                            for (std::size_t j = 0; j < n; ++j) {
                              const std::size_t idx = base + j * inner;
                              g[idx] += f * y[idx] * (dy[idx] - dot);
                            }
                          }
                        }
                      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t r = x.rows(), c = x.cols();
  if (c == 0) throw ShapeError("layer_norm: empty last axis");
  if (gain.size() != c || bias.size() != c) {
    throw ShapeError("layer_norm: affine params " + to_string(gain.shape()) + "/" +
                     to_string(bias.shape()) + " do not match " + to_string(x.shape()));
  }
  std::vector<double> out(x.size());
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto rstd = std::make_shared<std::vector<double>>(r);
  const auto in = x.data(), g = gain.data(), b = bias.data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = in.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[i] = rs;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (row[j] - mu) * rs;
      (*xhat)[i * c + j] = h;
      out[i * c + j] = h * g[j] + b[j];
    }
  }
  return detail::emit(x.shape(), std::move(out), {x, gain, bias},
                      [xhat, rstd, gain, r, c](std::span<const double> dy, GradSlots dx) {
                        const auto g = gain.data();
                        const auto& h = *xhat;
                        if (dx[1]) for (std::size_t i = 0; i < r * c; ++i) (*dx[1])[i % c] += dy[i] * h[i];
                        if (dx[2]) for (std::size_t i = 0; i < r * c; ++i) (*dx[2])[i % c] += dy[i];
                        if (!dx[0]) return;
                        const double f = debug::backward_fault("layer_norm");
                        auto& gx = *dx[0];
                        const double inv_c = 1.0 / static_cast<double>(c);
                        for (std::size_t i = 0; i < r; ++i) {
                          double m1 = 0.0, m2 = 0.0;
                          for (std::size_t j = 0; j < c; ++j) {
                            const double dh = dy[i * c + j] * g[j];
                            m1 += dh;
                            m2 += dh * h[i * c + j];
                          }
                          m1 *= inv_c;
                          m2 *= inv_c;
                          for (std::size_t j = 0; j < c; ++j) {
                            const double dh = dy[i * c + j] * g[j];
                            gx[i * c + j] += f * (*rstd)[i] * (dh - m1 - h[i * c + j] * m2);
                          }
                        }
                      });
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                            bool causal) {
  require_rank(q, 2, "attention");
  require_rank(k, 2, "attention");
  require_rank(v, 2, "attention");
  const std::size_t lq = q.dim(0), lk = k.dim(0), d = q.dim(1);
  if (k.dim(1) != d || v.dim(1) != d || v.dim(0) != lk) {
    throw ShapeError("attention: q " + to_string(q.shape()) + ", k " + to_string(k.shape()) +
                     ", v " + to_string(v.shape()));
  }
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("attention: dim " + std::to_string(d) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  if (causal && lq != lk) throw ShapeError("attention: causal mask needs equal query/key lengths");
  const std::size_t dh = d / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto Q = view(q.data(), lq, d), K = view(k.data(), lk, d), V = view(v.data(), lk, d);

  std::vector<double> out(lq * d);
  auto O = view(out, lq, d);
  auto probs = std::make_shared<std::vector<double>>(heads * lq * lk);
  RowMat S(lq, lk);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto c0 = static_cast<Eigen::Index>(h * dh), w = static_cast<Eigen::Index>(dh);
    S.noalias() = Q.middleCols(c0, w) * K.middleCols(c0, w).transpose();
    MutMap P(probs->data() + h * lq * lk, static_cast<Eigen::Index>(lq), static_cast<Eigen::Index>(lk));
    for (std::size_t i = 0; i < lq; ++i) {
      const std::size_t visible = causal ? i + 1 : lk;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < visible; ++j) mx = std::max(mx, S(i, j) * scale_factor);
      double z = 0.0;
      for (std::size_t j = 0; j < visible; ++j) {
        const double e = std::exp(S(i, j) * scale_factor - mx);
        P(i, j) = e;
        z += e;
      }
      for (std::size_t j = 0; j < visible; ++j) P(i, j) /= z;
      for (std::size_t j = visible; j < lk; ++j) P(i, j) = 0.0;
    }
    O.middleCols(c0, w).noalias() = P * V.middleCols(c0, w);
  }

  return detail::emit(
      {lq, d}, std::move(out), {q, k, v},
      [q, k, v, probs, heads, lq, lk, d, dh, scale_factor](std::span<const double> dy, GradSlots dx) {
        const auto Q = view(q.data(), lq, d), K = view(k.data(), lk, d), V = view(v.data(), lk, d);
        const auto dO = view(dy, lq, d);
        RowMat dP(lq, lk), dS(lq, lk);
        for (std::size_t h = 0; h < heads; ++h) {
          const auto c0 = static_cast<Eigen::Index>(h * dh), w = static_cast<Eigen::Index>(dh);
          const ConstMap P(probs->data() + h * lq * lk, static_cast<Eigen::Index>(lq),
                           static_cast<Eigen::Index>(lk));
          dP.noalias() = dO.middleCols(c0, w) * V.middleCols(c0, w).transpose();
          const Eigen::VectorXd rowdot = (dP.array() * P.array()).rowwise().sum();
          dS = (P.array() * (dP.array().colwise() - rowdot.array())).matrix() * scale_factor;
          if (dx[0]) view(*dx[0], lq, d).middleCols(c0, w).noalias() += dS * K.middleCols(c0, w);
          if (dx[1]) view(*dx[1], lk, d).middleCols(c0, w).noalias() += dS.transpose() * Q.middleCols(c0, w);
          if (dx[2]) view(*dx[2], lk, d).middleCols(c0, w).noalias() += P.transpose() * dO.middleCols(c0, w);
        }
        apply_fault("attention", dx);
      });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  const std::size_t r = x.rows(), c = x.cols();
  if (x.rank() < 1 || begin + count > r) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of " + to_string(x.shape()));
  }
  const auto in = x.data();
  std::vector<double> out(in.begin() + static_cast<std::ptrdiff_t>(begin * c),
                          in.begin() + static_cast<std::ptrdiff_t>((begin + count) * c));
  return detail::emit({count, c}, std::move(out), {x},
                      [begin, c](std::span<const double> dy, GradSlots dx) {
                        if (!dx[0]) return;
                        for (std::size_t i = 0; i < dy.size(); ++i) (*dx[0])[begin * c + i] += dy[i];
                      });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_rank(table, 2, "gather_rows");
  const std::size_t n = table.dim(0), c = table.dim(1);
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size() * c);
  const auto in = table.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n) {
      throw ShapeError("gather_rows: id " + std::to_string(idx[i]) + " outside table of " +
                       std::to_string(n) + " rows");
    }
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(idx[i] * c), c, out.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  return detail::emit({idx.size(), c}, std::move(out), {table},
                      [idx, c](std::span<const double> dy, GradSlots dx) {
                        if (!dx[0]) return;
                        for (std::size_t i = 0; i < idx.size(); ++i)
                          for (std::size_t j = 0; j < c; ++j) (*dx[0])[idx[i] * c + j] += dy[i * c + j];
                      });
}

Tensor patchify(const Tensor& image, std::size_t patch) {
  require_rank(image, 3, "patchify");
  const std::size_t H = image.dim(0), W = image.dim(1), C = image.dim(2);
  if (patch == 0 || H % patch != 0 || W % patch != 0) {
    throw ConfigError("patchify: patch size " + std::to_string(patch) + " does not divide " +
                      to_string(image.shape()));
  }
  const std::size_t gh = H / patch, gw = W / patch, width = patch * patch * C;
  // Maps every output slot to its source pixel index.
  auto src = std::make_shared<std::vector<std::size_t>>(gh * gw * width);
  for (std::size_t py = 0; py < gh; ++py)
    for (std::size_t px = 0; px < gw; ++px)
      for (std::size_t dy = 0; dy < patch; ++dy)
        for (std::size_t dx = 0; dx < patch; ++dx)
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t row = py * gw + px, col = (dy * patch + dx) * C + c;
            (*src)[row * width + col] = ((py * patch + dy) * W + (px * patch + dx)) * C + c;
          }
  std::vector<double> out(src->size());
  const auto in = image.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[(*src)[i]];
  return detail::emit({gh * gw, width}, std::move(out), {image},
                      [src](std::span<const double> dy, GradSlots dx) {
                        if (!dx[0]) return;
                        for (std::size_t i = 0; i < dy.size(); ++i) (*dx[0])[(*src)[i]] += dy[i];
                      });
}

Tensor depth_to_space(const Tensor& x, std::size_t height, std::size_t width) {
  require_rank(x, 2, "depth_to_space");
  if (x.dim(0) != height * width || x.dim(1) % 4 != 0) {
    throw ShapeError("depth_to_space: " + to_string(x.shape()) + " is not [" +
                     std::to_string(height * width) + ", 4*C]");
  }
  const std::size_t C = x.dim(1) / 4, W2 = 2 * width;
  auto dst = std::make_shared<std::vector<std::size_t>>(x.size());
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t xx = 0; xx < width; ++xx)
      for (std::size_t k = 0; k < 4; ++k)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t oy = 2 * y + k / 2, ox = 2 * xx + k % 2;
          (*dst)[(y * width + xx) * 4 * C + k * C + c] = (oy * W2 + ox) * C + c;
        }
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[(*dst)[i]] = in[i];
  return detail::emit({4 * height * width, C}, std::move(out), {x},
                      [dst](std::span<const double> dy, GradSlots dx) {
                        if (!dx[0]) return;
                        for (std::size_t i = 0; i < dx[0]->size(); ++i) (*dx[0])[i] += dy[(*dst)[i]];
                      });
}

}  // namespace tgfuse
