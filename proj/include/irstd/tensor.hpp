#pragma once

// Minimal dense tensor with reverse-mode automatic differentiation.
//
// A Tensor is a shared handle to a graph node holding shape, row-major f64
// data, an optional gradient accumulator and the closure that propagates
// gradients to its inputs.  backward(loss) runs a topological sweep from a
// scalar loss; leaf gradients accumulate across calls until zeroed, interior
// gradients are rebuilt per call.
//
// The operation set is fixed: matmul (with transpose flags), conv2d (stride
// 1, odd kernels, symmetric zero padding), transposed_conv2d (stride 2, even
// kernels), add (same-shape or trailing-axis bias), hadamard, relu, sigmoid,
// softmax and layer_norm over the last axis, mean, reshape, concat.
// Feature maps are stored channels-last ({H, W, C}) so "last axis" always
// means channels.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace irstd::autodiff {

namespace detail {

inline std::size_t numel_of(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= std::size_t(d);
  return n;
}

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "{";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "}";
}

}  // namespace detail

struct Node {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;  // leaf parameter flag
  bool needs_grad = false;     // true if any leaf below requires grad
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  std::size_t numel() const { return data.size(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : n(std::move(node)) {}

  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false) {
    if (detail::numel_of(shape) != data.size())
      throw std::invalid_argument("Tensor: data length does not match shape " +
                                  detail::shape_str(shape));
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    node->needs_grad = requires_grad;
    return Tensor(node);
  }

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    std::vector<double> data(detail::numel_of(shape), 0.0);
    return from_data(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor constant(std::vector<int> shape, double value) {
    std::vector<double> data(detail::numel_of(shape), value);
    return from_data(std::move(shape), std::move(data), false);
  }

  static Tensor scalar(double value) { return from_data({1}, {value}, false); }

  bool defined() const { return n != nullptr; }
  const std::vector<int>& shape() const { return n->shape; }
  std::size_t numel() const { return n->data.size(); }
  std::vector<double>& data() { return n->data; }
  const std::vector<double>& data() const { return n->data; }
  bool requires_grad() const { return n->requires_grad; }

  const std::vector<double>& grad() const {
    if (n->grad.size() != n->data.size())
      throw std::logic_error("Tensor: gradient not populated");
    return n->grad;
  }

  void zero_grad() { n->grad.assign(n->data.size(), 0.0); }

  double item() const {
    if (numel() != 1) throw std::invalid_argument("Tensor: item() needs a scalar");
    return n->data[0];
  }

  std::shared_ptr<Node> n;
};

namespace detail {

inline Tensor make_op(const char* op, std::vector<int> shape,
                      std::vector<std::shared_ptr<Node>> inputs,
                      std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data.assign(numel_of(node->shape), 0.0);
  node->op = op;
  node->inputs = std::move(inputs);
  for (const auto& in : node->inputs) node->needs_grad = node->needs_grad || in->needs_grad;
  if (node->needs_grad) node->backward = std::move(backward);
  return Tensor(node);
}

[[noreturn]] inline void shape_error(const char* op, const std::vector<int>& a,
                                     const std::vector<int>& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) +
                              " and " + shape_str(b));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// backward

// Populates gradients of every tensor reachable from a scalar loss.  Leaf
// gradients accumulate across calls; interior gradients are reset per call.
inline void backward(const Tensor& loss) {
  if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
  if (!loss.n->needs_grad) return;  // nothing below requires gradients

  // Iterative post-order DFS for the topological order; only nodes on a path
  // to a requires_grad leaf are visited.
  std::vector<Node*> order;
  std::vector<std::pair<Node*, std::size_t>> stack;
  std::unordered_set<Node*> seen;
  stack.emplace_back(loss.n.get(), 0);
  seen.insert(loss.n.get());
  while (!stack.empty()) {
    Node* node = stack.back().first;
    std::size_t& idx = stack.back().second;
    Node* child = nullptr;
    while (idx < node->inputs.size()) {
      Node* c = node->inputs[idx++].get();
      if (c->needs_grad && !seen.count(c)) {
        child = c;
        break;
      }
    }
    if (child) {
      seen.insert(child);
      stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior grads start fresh; leaves keep their accumulator.
  for (Node* node : order) {
    if (node->inputs.empty()) {
      node->ensure_grad();
    } else {
      node->grad.assign(node->data.size(), 0.0);
    }
  }
  loss.n->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->inputs.empty() && node->backward) {
      for (const auto& in : node->inputs) {
        if (in->needs_grad) in->ensure_grad();
      }
      node->backward(*node);
    }
  }
}

// ---------------------------------------------------------------------------
// primitives

// matmul with optional operand transposes: out = op_a(a) * op_b(b).
inline Tensor matmul(const Tensor& a, const Tensor& b, bool ta = false, bool tb = false) {
  if (a.shape().size() != 2 || b.shape().size() != 2)
    detail::shape_error("matmul", a.shape(), b.shape());
  const int m = ta ? a.shape()[1] : a.shape()[0];
  const int k = ta ? a.shape()[0] : a.shape()[1];
  const int kb = tb ? b.shape()[1] : b.shape()[0];
  const int n = tb ? b.shape()[0] : b.shape()[1];
  if (k != kb) detail::shape_error("matmul", a.shape(), b.shape());

  auto an = a.n, bn = b.n;
  auto A = [an, ta](int i, int t) {
    return ta ? an->data[std::size_t(t) * an->shape[1] + i]
              : an->data[std::size_t(i) * an->shape[1] + t];
  };
  auto B = [bn, tb](int t, int j) {
    return tb ? bn->data[std::size_t(j) * bn->shape[1] + t]
              : bn->data[std::size_t(t) * bn->shape[1] + j];
  };

  Tensor out = detail::make_op(
      "matmul", {m, n}, {an, bn}, [an, bn, ta, tb, m, n, k, A, B](Node& node) {
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < n; ++j) {
            const double go = node.grad[std::size_t(i) * n + j];
            if (go == 0.0) continue;
            if (an->needs_grad) {
              for (int t = 0; t < k; ++t) {
                const std::size_t ai =
                    ta ? std::size_t(t) * an->shape[1] + i : std::size_t(i) * an->shape[1] + t;
                an->grad[ai] += go * B(t, j);
              }
            }
            if (bn->needs_grad) {
              for (int t = 0; t < k; ++t) {
                const std::size_t bi =
                    tb ? std::size_t(j) * bn->shape[1] + t : std::size_t(t) * bn->shape[1] + j;
                bn->grad[bi] += go * A(i, t);
              }
            }
          }
        }
      });
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += A(i, t) * B(t, j);
      out.n->data[std::size_t(i) * n + j] = acc;
    }
  }
  return out;
}

// conv2d, stride 1: x {H,W,Ci}, w {kh,kw,Ci,Co}, optional bias {Co}; odd
// kernels, symmetric zero padding, spatial dims preserved.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias = Tensor()) {
  if (x.shape().size() != 3 || w.shape().size() != 4)
    detail::shape_error("conv2d", x.shape(), w.shape());
  const int H = x.shape()[0], W = x.shape()[1], Ci = x.shape()[2];
  const int kh = w.shape()[0], kw = w.shape()[1], Co = w.shape()[3];
  if (w.shape()[2] != Ci || kh % 2 == 0 || kw % 2 == 0)
    detail::shape_error("conv2d", x.shape(), w.shape());
  if (bias.defined() && (bias.shape().size() != 1 || bias.shape()[0] != Co))
    detail::shape_error("conv2d(bias)", bias.shape(), w.shape());
  const int ph = kh / 2, pw = kw / 2;

  auto xn = x.n, wn = w.n;
  auto bn = bias.defined() ? bias.n : nullptr;
  std::vector<std::shared_ptr<Node>> inputs = {xn, wn};
  if (bn) inputs.push_back(bn);

  Tensor out = detail::make_op(
      "conv2d", {H, W, Co}, std::move(inputs), [xn, wn, bn, H, W, Ci, kh, kw, Co, ph, pw](Node& node) {
        for (int y = 0; y < H; ++y) {
          for (int xx = 0; xx < W; ++xx) {
            for (int co = 0; co < Co; ++co) {
              const double go = node.grad[(std::size_t(y) * W + xx) * Co + co];
              if (go == 0.0) continue;
              if (bn && bn->needs_grad) bn->grad[std::size_t(co)] += go;
              for (int i = 0; i < kh; ++i) {
                const int sy = y + i - ph;
                if (sy < 0 || sy >= H) continue;
                for (int j = 0; j < kw; ++j) {
                  const int sx = xx + j - pw;
                  if (sx < 0 || sx >= W) continue;
                  for (int ci = 0; ci < Ci; ++ci) {
                    const std::size_t xi = (std::size_t(sy) * W + sx) * Ci + ci;
                    const std::size_t wi = ((std::size_t(i) * kw + j) * Ci + ci) * Co + co;
                    if (xn->needs_grad) xn->grad[xi] += go * wn->data[wi];
                    if (wn->needs_grad) wn->grad[wi] += go * xn->data[xi];
                  }
                }
              }
            }
          }
        }
      });

  for (int y = 0; y < H; ++y) {
    for (int xx = 0; xx < W; ++xx) {
      for (int co = 0; co < Co; ++co) {
        double acc = bn ? bn->data[std::size_t(co)] : 0.0;
        for (int i = 0; i < kh; ++i) {
          const int sy = y + i - ph;
          if (sy < 0 || sy >= H) continue;
          for (int j = 0; j < kw; ++j) {
            const int sx = xx + j - pw;
            if (sx < 0 || sx >= W) continue;
            for (int ci = 0; ci < Ci; ++ci) {
              acc += xn->data[(std::size_t(sy) * W + sx) * Ci + ci] *
                     wn->data[((std::size_t(i) * kw + j) * Ci + ci) * Co + co];
            }
          }
        }
        out.n->data[(std::size_t(y) * W + xx) * Co + co] = acc;
      }
    }
  }
  return out;
}

// transposed_conv2d, stride fixed at 2: x {h,w,Ci}, w {k,k,Ci,Co} with k
// even; output {2h,2w,Co} via out[2y+i-p, 2x+j-p] scatter, p = (k-2)/2.
inline Tensor transposed_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias = Tensor()) {
  if (x.shape().size() != 3 || w.shape().size() != 4)
    detail::shape_error("transposed_conv2d", x.shape(), w.shape());
  const int h = x.shape()[0], ww = x.shape()[1], Ci = x.shape()[2];
  const int kh = w.shape()[0], kw = w.shape()[1], Co = w.shape()[3];
  if (w.shape()[2] != Ci || kh != kw || kh % 2 != 0)
    detail::shape_error("transposed_conv2d", x.shape(), w.shape());
  if (bias.defined() && (bias.shape().size() != 1 || bias.shape()[0] != Co))
    detail::shape_error("transposed_conv2d(bias)", bias.shape(), w.shape());
  const int p = (kh - 2) / 2;
  const int OH = 2 * h, OW = 2 * ww;

  auto xn = x.n, wn = w.n;
  auto bn = bias.defined() ? bias.n : nullptr;
  std::vector<std::shared_ptr<Node>> inputs = {xn, wn};
  if (bn) inputs.push_back(bn);

  Tensor out = detail::make_op(
      "transposed_conv2d", {OH, OW, Co}, std::move(inputs),
      [xn, wn, bn, h, ww, Ci, kh, kw, Co, p, OH, OW](Node& node) {
        if (bn && bn->needs_grad) {
          for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox)
              for (int co = 0; co < Co; ++co)
                bn->grad[std::size_t(co)] += node.grad[(std::size_t(oy) * OW + ox) * Co + co];
        }
        for (int y = 0; y < h; ++y) {
          for (int xx = 0; xx < ww; ++xx) {
            for (int i = 0; i < kh; ++i) {
              const int oy = 2 * y + i - p;
              if (oy < 0 || oy >= OH) continue;
              for (int j = 0; j < kw; ++j) {
                const int ox = 2 * xx + j - p;
                if (ox < 0 || ox >= OW) continue;
                for (int co = 0; co < Co; ++co) {
                  const double go = node.grad[(std::size_t(oy) * OW + ox) * Co + co];
                  if (go == 0.0) continue;
                  for (int ci = 0; ci < Ci; ++ci) {
                    const std::size_t xi = (std::size_t(y) * ww + xx) * Ci + ci;
                    const std::size_t wi = ((std::size_t(i) * kw + j) * Ci + ci) * Co + co;
                    if (xn->needs_grad) xn->grad[xi] += go * wn->data[wi];
                    if (wn->needs_grad) wn->grad[wi] += go * xn->data[xi];
                  }
                }
              }
            }
          }
        }
      });

  for (std::size_t idx = 0; idx < out.n->data.size(); ++idx) {
    out.n->data[idx] = bn ? bn->data[idx % std::size_t(Co)] : 0.0;
  }
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < ww; ++xx) {
      for (int i = 0; i < kh; ++i) {
        const int oy = 2 * y + i - p;
        if (oy < 0 || oy >= OH) continue;
        for (int j = 0; j < kw; ++j) {
          const int ox = 2 * xx + j - p;
          if (ox < 0 || ox >= OW) continue;
          for (int ci = 0; ci < Ci; ++ci) {
            const double xv = xn->data[(std::size_t(y) * ww + xx) * Ci + ci];
            for (int co = 0; co < Co; ++co) {
              out.n->data[(std::size_t(oy) * OW + ox) * Co + co] +=
                  xv * wn->data[((std::size_t(i) * kw + j) * Ci + ci) * Co + co];
            }
          }
        }
      }
    }
  }
  return out;
}

// add: identical shapes, or bias broadcast where b is rank 1 over a's last axis.
inline Tensor add(const Tensor& a, const Tensor& b) {
  const bool same = a.shape() == b.shape();
  const bool bias = !same && b.shape().size() == 1 && !a.shape().empty() &&
                    a.shape().back() == b.shape()[0];
  if (!same && !bias) detail::shape_error("add", a.shape(), b.shape());
  auto an = a.n, bn = b.n;
  const std::size_t c = bias ? std::size_t(b.shape()[0]) : 0;

  Tensor out = detail::make_op("add", a.shape(), {an, bn}, [an, bn, same, c](Node& node) {
    for (std::size_t i = 0; i < node.grad.size(); ++i) {
      if (an->needs_grad) an->grad[i] += node.grad[i];
      if (bn->needs_grad) bn->grad[same ? i : i % c] += node.grad[i];
    }
  });
  for (std::size_t i = 0; i < out.n->data.size(); ++i) {
    out.n->data[i] = an->data[i] + bn->data[same ? i : i % c];
  }
  return out;
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) detail::shape_error("hadamard", a.shape(), b.shape());
  auto an = a.n, bn = b.n;
  Tensor out = detail::make_op("hadamard", a.shape(), {an, bn}, [an, bn](Node& node) {
    for (std::size_t i = 0; i < node.grad.size(); ++i) {
      if (an->needs_grad) an->grad[i] += node.grad[i] * bn->data[i];
      if (bn->needs_grad) bn->grad[i] += node.grad[i] * an->data[i];
    }
  });
  for (std::size_t i = 0; i < out.n->data.size(); ++i) out.n->data[i] = an->data[i] * bn->data[i];
  return out;
}

inline Tensor relu(const Tensor& x) {
  auto xn = x.n;
  Tensor out = detail::make_op("relu", x.shape(), {xn}, [xn](Node& node) {
    if (!xn->needs_grad) return;
    for (std::size_t i = 0; i < node.grad.size(); ++i) {
      if (xn->data[i] > 0.0) xn->grad[i] += node.grad[i];
    }
  });
  for (std::size_t i = 0; i < out.n->data.size(); ++i) {
    out.n->data[i] = xn->data[i] > 0.0 ? xn->data[i] : 0.0;
  }
  return out;
}

inline Tensor sigmoid(const Tensor& x) {
  auto xn = x.n;
  Tensor out = detail::make_op("sigmoid", x.shape(), {xn}, [xn](Node& node) {
    if (!xn->needs_grad) return;
    for (std::size_t i = 0; i < node.grad.size(); ++i) {
      const double s = node.data[i];
      xn->grad[i] += node.grad[i] * s * (1.0 - s);
    }
  });
  for (std::size_t i = 0; i < out.n->data.size(); ++i) {
    out.n->data[i] = 1.0 / (1.0 + std::exp(-xn->data[i]));
  }
  return out;
}

// softmax over the last axis, numerically shifted by the row max.
inline Tensor softmax(const Tensor& x) {
  if (x.shape().empty()) detail::shape_error("softmax", x.shape(), x.shape());
  const std::size_t c = std::size_t(x.shape().back());
  auto xn = x.n;
  Tensor out = detail::make_op("softmax", x.shape(), {xn}, [xn, c](Node& node) {
    if (!xn->needs_grad) return;
    const std::size_t rows = node.data.size() / c;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* s = node.data.data() + r * c;
      const double* go = node.grad.data() + r * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += go[j] * s[j];
      for (std::size_t j = 0; j < c; ++j) xn->grad[r * c + j] += s[j] * (go[j] - dot);
    }
  });
  const std::size_t rows = x.numel() / c;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xn->data.data() + r * c;
    double* o = out.n->data.data() + r * c;
    double mx = in[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < c; ++j) o[j] /= sum;
  }
  return out;
}

// layer_norm over the last axis with learnable scale/shift; eps sits inside
// the square root.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         double eps = 1e-5) {
  if (x.shape().empty()) detail::shape_error("layer_norm", x.shape(), gamma.shape());
  const int C = x.shape().back();
  if (gamma.shape() != std::vector<int>{C} || beta.shape() != std::vector<int>{C})
    detail::shape_error("layer_norm", x.shape(), gamma.shape());
  const std::size_t c = std::size_t(C);
  auto xn = x.n, gn = gamma.n, bn = beta.n;

  // Forward stashes mean and inverse stddev per position for the backward.
  auto stats = std::make_shared<std::vector<double>>();  // mu, istd interleaved
  Tensor out = detail::make_op(
      "layer_norm", x.shape(), {xn, gn, bn}, [xn, gn, bn, c, stats](Node& node) {
        const std::size_t rows = node.data.size() / c;
        for (std::size_t r = 0; r < rows; ++r) {
          const double mu = (*stats)[2 * r];
          const double istd = (*stats)[2 * r + 1];
          const double* go = node.grad.data() + r * c;
          const double* xv = xn->data.data() + r * c;
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            const double xhat = (xv[j] - mu) * istd;
            const double dxhat = go[j] * gn->data[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            if (gn->needs_grad) gn->grad[j] += go[j] * xhat;
            if (bn->needs_grad) bn->grad[j] += go[j];
          }
          if (xn->needs_grad) {
            for (std::size_t j = 0; j < c; ++j) {
              const double xhat = (xv[j] - mu) * istd;
              const double dxhat = go[j] * gn->data[j];
              xn->grad[r * c + j] +=
                  istd * (dxhat - (sum_dxhat + xhat * sum_dxhat_xhat) / double(c));
            }
          }
        }
      });

  const std::size_t rows = x.numel() / c;
  stats->resize(2 * rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xn->data.data() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += in[j];
    mu /= double(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= double(c);
    const double istd = 1.0 / std::sqrt(var + eps);
    (*stats)[2 * r] = mu;
    (*stats)[2 * r + 1] = istd;
    for (std::size_t j = 0; j < c; ++j) {
      out.n->data[r * c + j] = gn->data[j] * ((in[j] - mu) * istd) + bn->data[j];
    }
  }
  return out;
}

inline Tensor mean(const Tensor& x) {
  auto xn = x.n;
  const double inv = 1.0 / double(x.numel());
  Tensor out = detail::make_op("mean", {1}, {xn}, [xn, inv](Node& node) {
    if (!xn->needs_grad) return;
    for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += node.grad[0] * inv;
  });
  double acc = 0.0;
  for (double v : xn->data) acc += v;
  out.n->data[0] = acc * inv;
  return out;
}

inline Tensor reshape(const Tensor& x, std::vector<int> shape) {
  if (detail::numel_of(shape) != x.numel()) detail::shape_error("reshape", x.shape(), shape);
  auto xn = x.n;
  Tensor out = detail::make_op("reshape", std::move(shape), {xn}, [xn](Node& node) {
    if (!xn->needs_grad) return;
    for (std::size_t i = 0; i < node.grad.size(); ++i) xn->grad[i] += node.grad[i];
  });
  out.n->data = xn->data;
  return out;
}

// concat along an axis; all other dims must agree.
inline Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  if (a.shape().size() != b.shape().size() || axis < 0 || axis >= int(a.shape().size()))
    detail::shape_error("concat", a.shape(), b.shape());
  for (std::size_t d = 0; d < a.shape().size(); ++d) {
    if (int(d) != axis && a.shape()[d] != b.shape()[d])
      detail::shape_error("concat", a.shape(), b.shape());
  }
  std::vector<int> shape = a.shape();
  shape[std::size_t(axis)] += b.shape()[std::size_t(axis)];

  // outer x (axis block) x inner decomposition
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= std::size_t(a.shape()[std::size_t(d)]);
  for (std::size_t d = std::size_t(axis) + 1; d < a.shape().size(); ++d)
    inner *= std::size_t(a.shape()[d]);
  const std::size_t ablk = std::size_t(a.shape()[std::size_t(axis)]) * inner;
  const std::size_t bblk = std::size_t(b.shape()[std::size_t(axis)]) * inner;

  auto an = a.n, bn = b.n;
  Tensor out = detail::make_op("concat", std::move(shape), {an, bn},
                               [an, bn, outer, ablk, bblk](Node& node) {
                                 for (std::size_t o = 0; o < outer; ++o) {
                                   const double* go = node.grad.data() + o * (ablk + bblk);
                                   if (an->needs_grad) {
                                     for (std::size_t i = 0; i < ablk; ++i)
                                       an->grad[o * ablk + i] += go[i];
                                   }
                                   if (bn->needs_grad) {
                                     for (std::size_t i = 0; i < bblk; ++i)
                                       bn->grad[o * bblk + i] += go[ablk + i];
                                   }
                                 }
                               });
  for (std::size_t o = 0; o < outer; ++o) {
    double* dst = out.n->data.data() + o * (ablk + bblk);
    for (std::size_t i = 0; i < ablk; ++i) dst[i] = an->data[o * ablk + i];
    for (std::size_t i = 0; i < bblk; ++i) dst[ablk + i] = bn->data[o * bblk + i];
  }
  return out;
}

// Convenience wrappers built from the primitives (no new backward rules).

inline Tensor scale(const Tensor& x, double c) {
  return hadamard(x, Tensor::constant(x.shape(), c));
}

// Extracts rows [first, first+count) of a 2-D tensor as a one-hot matmul so
// the selection stays differentiable.
inline Tensor select_rows(const Tensor& x, int first, int count) {
  if (x.shape().size() != 2 || first < 0 || count < 1 || first + count > x.shape()[0])
    throw std::invalid_argument("select_rows: rows [" + std::to_string(first) + "," +
                                std::to_string(first + count) + ") outside " +
                                detail::shape_str(x.shape()));
  Tensor sel = Tensor::zeros({count, x.shape()[0]});
  for (int i = 0; i < count; ++i) sel.data()[std::size_t(i) * x.shape()[0] + first + i] = 1.0;
  return matmul(sel, x);
}

// ---------------------------------------------------------------------------
// finite differences

// Central-difference check of d(f)/dx against the autodiff gradient.
// Returns the max relative error with denominator max(|analytic|, |numeric|,
// 1e-8).  f must be a pure function of its argument.
inline double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                double eps = 1e-5) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be positive");
  Tensor probe = Tensor::from_data(x.shape(), x.data(), true);
  Tensor loss = f(probe);
  if (loss.numel() != 1) throw std::invalid_argument("finite_diff_check: f must return a scalar");
  backward(loss);
  const std::vector<double> analytic = probe.grad();

  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    Tensor plus = Tensor::from_data(x.shape(), x.data(), false);
    plus.data()[i] += eps;
    Tensor minus = Tensor::from_data(x.shape(), x.data(), false);
    minus.data()[i] -= eps;
    const double numeric = (f(plus).item() - f(minus).item()) / (2.0 * eps);
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
    worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// snapshots

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) out.push_back(char((bits >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const std::string& in, std::size_t& at) {
  if (at + 4 > in.size()) throw std::runtime_error("snapshot: truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(in[at + i])) << (8 * i);
  at += 4;
  return v;
}

inline double get_f64(const std::string& in, std::size_t& at) {
  if (at + 8 > in.size()) throw std::runtime_error("snapshot: truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t(static_cast<unsigned char>(in[at + i])) << (8 * i);
  at += 8;
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace detail

inline constexpr char kSnapshotMagic[4] = {'I', 'R', 'T', 'S'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

struct SnapshotEntry {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;
};

// Flat little-endian container: magic, version, count, then per tensor
// name length/bytes, rank, dims, raw f64 data.
inline void save_snapshot(const std::string& path, const std::vector<SnapshotEntry>& entries) {
  std::string out(kSnapshotMagic, 4);
  detail::put_u32(out, kSnapshotVersion);
  detail::put_u32(out, std::uint32_t(entries.size()));
  for (const auto& e : entries) {
    detail::put_u32(out, std::uint32_t(e.name.size()));
    out += e.name;
    detail::put_u32(out, std::uint32_t(e.shape.size()));
    for (int d : e.shape) detail::put_u32(out, std::uint32_t(d));
    for (double v : e.data) detail::put_f64(out, v);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw std::runtime_error("write failed for " + path);
}

inline std::vector<SnapshotEntry> load_snapshot(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::size_t at = 0;
  if (in.size() < 4 || in.compare(0, 4, kSnapshotMagic, 4) != 0)
    throw std::runtime_error("snapshot: bad magic");
  at = 4;
  if (detail::get_u32(in, at) != kSnapshotVersion)
    throw std::runtime_error("snapshot: unsupported version");
  const std::uint32_t count = detail::get_u32(in, at);
  std::vector<SnapshotEntry> entries;
  entries.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    SnapshotEntry e;
    const std::uint32_t name_len = detail::get_u32(in, at);
    if (at + name_len > in.size()) throw std::runtime_error("snapshot: truncated");
    e.name = in.substr(at, name_len);
    at += name_len;
    const std::uint32_t rank = detail::get_u32(in, at);
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      e.shape.push_back(int(detail::get_u32(in, at)));
      numel *= std::size_t(e.shape.back());
    }
    e.data.resize(numel);
    for (std::size_t i = 0; i < numel; ++i) e.data[i] = detail::get_f64(in, at);
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace irstd::autodiff
