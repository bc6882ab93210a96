#ifndef GMA_TAPE_HPP
#define GMA_TAPE_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gma/tensor.hpp"

namespace gma {

/// Handle into a Tape. Plain index; valid only for the tape that issued it.
using Var = int;

/// Reverse-mode autodiff over rank-2 tensors. Each operation appends a node
/// holding its output value and a closure that scatters the output adjoint
/// back to the inputs. backward() replays those closures in reverse
/// execution order.
///
/// Single-threaded per training context. Repeated backward() calls without
/// clearing accumulate into leaf grads; the harness resets grads each step.
template <class R = double>
class Tape {
 public:
  struct Node {
    Tensor<R> value;
    std::vector<R> adj;       // per-backward scratch, lazily sized
    std::vector<R> grad_acc;  // accumulated across backward calls
    bool needs_grad = false;
    std::function<void(Tape&)> pull;  // empty for leaves
  };

  Var leaf(Tensor<R> value, bool needs_grad = false) {
    check_finite(value, "leaf");
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }

  const Tensor<R>& val(Var v) const { return nodes_[v].value; }
  int rows(Var v) const { return nodes_[v].value.rows; }
  int cols(Var v) const { return nodes_[v].value.cols; }
  bool needs_grad(Var v) const { return nodes_[v].needs_grad; }

  /// Accumulated gradient of v over all backward() calls so far; zeros if
  /// it never received gradient.
  Tensor<R> grad(Var v) const {
    const Node& n = nodes_[v];
    Tensor<R> g(n.value.rows, n.value.cols);
    if (!n.grad_acc.empty()) g.data = n.grad_acc;
    return g;
  }

  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // ---- core ops -----------------------------------------------------------

  Var matmul(Var a, Var b) {
    const Tensor<R>& A = val(a);
    const Tensor<R>& B = val(b);
    if (A.cols != B.rows)
      throw std::invalid_argument("matmul: inner extents " +
                                  shape_str(A.rows, A.cols) + " vs " +
                                  shape_str(B.rows, B.cols));
    Tensor<R> out(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i)
      for (int k = 0; k < A.cols; ++k) {
        R aik = A.at(i, k);
        if (aik == R(0)) continue;
        for (int j = 0; j < B.cols; ++j) out.at(i, j) += aik * B.at(k, j);
      }
    return record(std::move(out), {a, b}, [a, b](Tape& t, Var o) {
      const auto& g = t.nodes_[o].adj;
      const Tensor<R>& A = t.val(a);
      const Tensor<R>& B = t.val(b);
      int m = A.rows, k = A.cols, n = B.cols;
      if (t.nodes_[a].needs_grad) {
        auto& ga = t.adj_of(a);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            R gij = g[static_cast<size_t>(i) * n + j];
            if (gij == R(0)) continue;
            for (int p = 0; p < k; ++p)
              ga[static_cast<size_t>(i) * k + p] += gij * B.at(p, j);
          }
      }
      if (t.nodes_[b].needs_grad) {
        auto& gb = t.adj_of(b);
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            R aip = A.at(i, p);
            if (aip == R(0)) continue;
            for (int j = 0; j < n; ++j)
              gb[static_cast<size_t>(p) * n + j] +=
                  aip * g[static_cast<size_t>(i) * n + j];
          }
      }
    });
  }

  Var transpose(Var a) {
    const Tensor<R>& A = val(a);
    Tensor<R> out(A.cols, A.rows);
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < A.cols; ++j) out.at(j, i) = A.at(i, j);
    return record(std::move(out), {a}, [a](Tape& t, Var o) {
      if (!t.nodes_[a].needs_grad) return;
      const auto& g = t.nodes_[o].adj;
      const Tensor<R>& O = t.val(o);
      auto& ga = t.adj_of(a);
      for (int i = 0; i < O.rows; ++i)
        for (int j = 0; j < O.cols; ++j)
          ga[static_cast<size_t>(j) * O.rows + i] +=
              g[static_cast<size_t>(i) * O.cols + j];
    });
  }

  Var add(Var a, Var b) {
    return binary_elementwise(
        a, b, "add", [](R x, R y) { return x + y; },
        [](R, R, R g) { return std::pair<R, R>(g, g); });
  }

  Var sub(Var a, Var b) {
    return binary_elementwise(
        a, b, "sub", [](R x, R y) { return x - y; },
        [](R, R, R g) { return std::pair<R, R>(g, -g); });
  }

  Var elementwise_mul(Var a, Var b) {
    return binary_elementwise(
        a, b, "elementwise_mul", [](R x, R y) { return x * y; },
        [](R x, R y, R g) { return std::pair<R, R>(g * y, g * x); });
  }

  /// Broadcast-add a 1xN row vector to every row of an MxN tensor.
  Var add_rowvec(Var a, Var b) {
    const Tensor<R>& A = val(a);
    const Tensor<R>& B = val(b);
    if (B.rows != 1 || B.cols != A.cols)
      throw std::invalid_argument("add_rowvec: expected 1x" +
                                  std::to_string(A.cols) + ", got " +
                                  shape_str(B.rows, B.cols));
    Tensor<R> out(A.rows, A.cols);
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < A.cols; ++j) out.at(i, j) = A.at(i, j) + B.at(0, j);
    return record(std::move(out), {a, b}, [a, b](Tape& t, Var o) {
      const auto& g = t.nodes_[o].adj;
      const Tensor<R>& O = t.val(o);
      if (t.nodes_[a].needs_grad) {
        auto& ga = t.adj_of(a);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (t.nodes_[b].needs_grad) {
        auto& gb = t.adj_of(b);
        for (int i = 0; i < O.rows; ++i)
          for (int j = 0; j < O.cols; ++j)
            gb[j] += g[static_cast<size_t>(i) * O.cols + j];
      }
    });
  }

  Var scale(Var a, R c) {
    const Tensor<R>& A = val(a);
    Tensor<R> out(A.rows, A.cols);
    for (size_t i = 0; i < A.size(); ++i) out.data[i] = A.data[i] * c;
    return record(std::move(out), {a}, [a, c](Tape& t, Var o) {
      if (!t.nodes_[a].needs_grad) return;
      const auto& g = t.nodes_[o].adj;
      auto& ga = t.adj_of(a);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    });
  }

  Var relu(Var a) {
    return unary_elementwise(
        a, [](R x) { return x > R(0) ? x : R(0); },
        [](R x, R) { return x > R(0) ? R(1) : R(0); });
  }

  Var sigmoid(Var a) {
    return unary_elementwise(
        a,
        [](R x) {
          // split on sign so exp never overflows
          if (x >= R(0)) return R(1) / (R(1) + std::exp(-x));
          R e = std::exp(x);
          return e / (R(1) + e);
        },
        [](R, R y) { return y * (R(1) - y); });
  }

  Var tanh_(Var a) {
    return unary_elementwise(a, [](R x) { return std::tanh(x); },
                             [](R, R y) { return R(1) - y * y; });
  }

  Var exp_(Var a) {
    return unary_elementwise(a, [](R x) { return std::exp(x); },
                             [](R, R y) { return y; });
  }

  /// Row-wise masked softmax with per-row max subtraction. mask, when given,
  /// is a same-shape 0/1 tensor; masked entries come out exactly 0 and each
  /// row must keep at least one unmasked entry.
  Var softmax_rows(Var a, const Tensor<R>* mask = nullptr) {
    const Tensor<R>& A = val(a);
    if (mask && !mask->same_shape(A))
      throw std::invalid_argument("softmax_rows: mask shape mismatch");
    Tensor<R> out(A.rows, A.cols);
    for (int i = 0; i < A.rows; ++i) {
      R mx = -std::numeric_limits<R>::infinity();
      for (int j = 0; j < A.cols; ++j)
        if (!mask || mask->at(i, j) != R(0)) mx = std::max(mx, A.at(i, j));
      if (mx == -std::numeric_limits<R>::infinity())
        throw std::runtime_error("softmax_rows: fully masked row " +
                                 std::to_string(i));
      R z = R(0);
      for (int j = 0; j < A.cols; ++j) {
        if (!mask || mask->at(i, j) != R(0)) {
          out.at(i, j) = std::exp(A.at(i, j) - mx);
          z += out.at(i, j);
        }
      }
      for (int j = 0; j < A.cols; ++j) out.at(i, j) /= z;
    }
    Tensor<R> m = mask ? *mask : Tensor<R>();
    bool has_mask = mask != nullptr;
    return record(std::move(out), {a},
                  [a, m = std::move(m), has_mask](Tape& t, Var o) {
                    if (!t.nodes_[a].needs_grad) return;
                    const auto& g = t.nodes_[o].adj;
                    const Tensor<R>& Y = t.val(o);
                    auto& ga = t.adj_of(a);
                    for (int i = 0; i < Y.rows; ++i) {
                      R dot = R(0);
                      for (int j = 0; j < Y.cols; ++j)
                        dot += g[static_cast<size_t>(i) * Y.cols + j] *
                               Y.at(i, j);
                      for (int j = 0; j < Y.cols; ++j) {
                        if (has_mask && m.at(i, j) == R(0)) continue;
                        ga[static_cast<size_t>(i) * Y.cols + j] +=
                            Y.at(i, j) *
                            (g[static_cast<size_t>(i) * Y.cols + j] - dot);
                      }
                    }
                  });
  }

  Var concat_cols(Var a, Var b) {
    const Tensor<R>& A = val(a);
    const Tensor<R>& B = val(b);
    if (A.rows != B.rows)
      throw std::invalid_argument("concat_cols: row extents differ");
    Tensor<R> out(A.rows, A.cols + B.cols);
    for (int i = 0; i < A.rows; ++i) {
      for (int j = 0; j < A.cols; ++j) out.at(i, j) = A.at(i, j);
      for (int j = 0; j < B.cols; ++j) out.at(i, A.cols + j) = B.at(i, j);
    }
    int ac = A.cols;
    return record(std::move(out), {a, b}, [a, b, ac](Tape& t, Var o) {
      const auto& g = t.nodes_[o].adj;
      const Tensor<R>& O = t.val(o);
      if (t.nodes_[a].needs_grad) {
        auto& ga = t.adj_of(a);
        for (int i = 0; i < O.rows; ++i)
          for (int j = 0; j < ac; ++j)
            ga[static_cast<size_t>(i) * ac + j] +=
                g[static_cast<size_t>(i) * O.cols + j];
      }
      if (t.nodes_[b].needs_grad) {
        int bc = O.cols - ac;
        auto& gb = t.adj_of(b);
        for (int i = 0; i < O.rows; ++i)
          for (int j = 0; j < bc; ++j)
            gb[static_cast<size_t>(i) * bc + j] +=
                g[static_cast<size_t>(i) * O.cols + ac + j];
      }
    });
  }

  Var concat_rows(Var a, Var b) {
    const Tensor<R>& A = val(a);
    const Tensor<R>& B = val(b);
    if (A.cols != B.cols)
      throw std::invalid_argument("concat_rows: column extents differ");
    Tensor<R> out(A.rows + B.rows, A.cols);
    std::copy(A.data.begin(), A.data.end(), out.data.begin());
    std::copy(B.data.begin(), B.data.end(), out.data.begin() + A.size());
    size_t an = A.size();
    return record(std::move(out), {a, b}, [a, b, an](Tape& t, Var o) {
      const auto& g = t.nodes_[o].adj;
      if (t.nodes_[a].needs_grad) {
        auto& ga = t.adj_of(a);
        for (size_t i = 0; i < an; ++i) ga[i] += g[i];
      }
      if (t.nodes_[b].needs_grad) {
        auto& gb = t.adj_of(b);
        for (size_t i = 0; i < gb.size(); ++i) gb[i] += g[an + i];
      }
    });
  }

  /// Column-wise max over valid rows. Ties route gradient to the lowest row
  /// index so adjoints stay deterministic.
  Var max_over_rows(Var a, const std::vector<uint8_t>* row_mask = nullptr) {
    const Tensor<R>& A = val(a);
    if (row_mask && static_cast<int>(row_mask->size()) != A.rows)
      throw std::invalid_argument("max_over_rows: mask length mismatch");
    std::vector<int> argmax(A.cols, -1);
    Tensor<R> out(1, A.cols);
    for (int j = 0; j < A.cols; ++j) {
      for (int i = 0; i < A.rows; ++i) {
        if (row_mask && !(*row_mask)[i]) continue;
        if (argmax[j] < 0 || A.at(i, j) > out.at(0, j)) {
          out.at(0, j) = A.at(i, j);
          argmax[j] = i;
        }
      }
      if (argmax[j] < 0)
        throw std::runtime_error("max_over_rows: no valid rows");
    }
    return record(std::move(out), {a},
                  [a, argmax = std::move(argmax)](Tape& t, Var o) {
                    if (!t.nodes_[a].needs_grad) return;
                    const auto& g = t.nodes_[o].adj;
                    const Tensor<R>& A = t.val(a);
                    auto& ga = t.adj_of(a);
                    for (int j = 0; j < A.cols; ++j)
                      ga[static_cast<size_t>(argmax[j]) * A.cols + j] += g[j];
                  });
  }

  /// Zero out rows whose mask entry is 0. Forward and adjoint are the same
  /// row filter.
  Var mask_rows(Var a, const std::vector<uint8_t>& row_mask) {
    const Tensor<R>& A = val(a);
    if (static_cast<int>(row_mask.size()) != A.rows)
      throw std::invalid_argument("mask_rows: mask length mismatch");
    Tensor<R> out = A;
    for (int i = 0; i < A.rows; ++i)
      if (!row_mask[i])
        for (int j = 0; j < A.cols; ++j) out.at(i, j) = R(0);
    return record(std::move(out), {a}, [a, row_mask](Tape& t, Var o) {
      if (!t.nodes_[a].needs_grad) return;
      const auto& g = t.nodes_[o].adj;
      const Tensor<R>& A = t.val(a);
      auto& ga = t.adj_of(a);
      for (int i = 0; i < A.rows; ++i) {
        if (!row_mask[i]) continue;
        for (int j = 0; j < A.cols; ++j)
          ga[static_cast<size_t>(i) * A.cols + j] +=
              g[static_cast<size_t>(i) * A.cols + j];
      }
    });
  }

  Var sum_all(Var a) {
    const Tensor<R>& A = val(a);
    R s = R(0);
    for (R v : A.data) s += v;
    return record(Tensor<R>(1, 1, {s}), {a}, [a](Tape& t, Var o) {
      if (!t.nodes_[a].needs_grad) return;
      R g = t.nodes_[o].adj[0];
      auto& ga = t.adj_of(a);
      for (R& v : ga) v += g;
    });
  }

  /// Pairwise squared Euclidean distances between rows: out_ij =
  /// ||x_i - x_j||^2. Dedicated node so the adjoint stays O(K^2 d).
  Var pairwise_sqdist(Var a) {
    const Tensor<R>& A = val(a);
    Tensor<R> out(A.rows, A.rows);
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < A.rows; ++j) {
        R s = R(0);
        for (int k = 0; k < A.cols; ++k) {
          R d = A.at(i, k) - A.at(j, k);
          s += d * d;
        }
        out.at(i, j) = s;
      }
    return record(std::move(out), {a}, [a](Tape& t, Var o) {
      if (!t.nodes_[a].needs_grad) return;
      const auto& g = t.nodes_[o].adj;
      const Tensor<R>& A = t.val(a);
      auto& ga = t.adj_of(a);
      int n = A.rows, d = A.cols;
      // d out_ij / d x_i = 2(x_i - x_j); d out_ij / d x_j = -2(x_i - x_j)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          R gij = g[static_cast<size_t>(i) * n + j];
          if (gij == R(0)) continue;
          for (int k = 0; k < d; ++k) {
            R diff = R(2) * (A.at(i, k) - A.at(j, k)) * gij;
            ga[static_cast<size_t>(i) * d + k] += diff;
            ga[static_cast<size_t>(j) * d + k] -= diff;
          }
        }
    });
  }

  /// Inverted dropout: zero with probability p and scale survivors by
  /// 1/(1-p) in training mode; identity in eval mode.
  Var dropout(Var a, double p, bool training, std::mt19937_64& rng) {
    if (p < 0.0 || p >= 1.0)
      throw std::invalid_argument("dropout: p must be in [0,1)");
    if (!training || p == 0.0) return a;
    const Tensor<R>& A = val(a);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<R> keep(A.size());
    R inv = static_cast<R>(1.0 / (1.0 - p));
    for (size_t i = 0; i < keep.size(); ++i)
      keep[i] = (u(rng) >= p) ? inv : R(0);
    Tensor<R> out(A.rows, A.cols);
    for (size_t i = 0; i < A.size(); ++i) out.data[i] = A.data[i] * keep[i];
    return record(std::move(out), {a},
                  [a, keep = std::move(keep)](Tape& t, Var o) {
                    if (!t.nodes_[a].needs_grad) return;
                    const auto& g = t.nodes_[o].adj;
                    auto& ga = t.adj_of(a);
                    for (size_t i = 0; i < g.size(); ++i)
                      ga[i] += g[i] * keep[i];
                  });
  }

  /// Multi-label binary cross-entropy of logits against soft targets,
  /// summed over classes, via the stable log-sigmoid identity. Gradient is
  /// the closed form sigmoid(y) - t.
  Var soft_ce_loss(Var logits, const Tensor<R>& targets) {
    const Tensor<R>& Y = val(logits);
    if (!Y.same_shape(targets))
      throw std::invalid_argument("soft_ce_loss: shape mismatch");
    for (R t : targets.data)
      if (t < R(0) || t > R(1))
        throw std::invalid_argument("soft_ce_loss: target outside [0,1]");
    R loss = R(0);
    for (size_t i = 0; i < Y.size(); ++i) {
      R y = Y.data[i], t = targets.data[i];
      // -[t log s(y) + (1-t) log(1-s(y))] = softplus(y) - t*y, stable form
      R sp = y > R(0) ? y + std::log1p(std::exp(-y)) : std::log1p(std::exp(y));
      loss += sp - t * y;
    }
    return record(Tensor<R>(1, 1, {loss}), {logits},
                  [logits, targets](Tape& t, Var o) {
                    if (!t.nodes_[logits].needs_grad) return;
                    R g = t.nodes_[o].adj[0];
                    const Tensor<R>& Y = t.val(logits);
                    auto& ga = t.adj_of(logits);
                    for (size_t i = 0; i < Y.size(); ++i) {
                      R y = Y.data[i];
                      R s = y >= R(0) ? R(1) / (R(1) + std::exp(-y))
                                      : std::exp(y) / (R(1) + std::exp(y));
                      ga[i] += g * (s - targets.data[i]);
                    }
                  });
  }

  // ---- backward -----------------------------------------------------------

  /// Seed the 1x1 loss with adjoint 1 and replay the tape in reverse.
  void backward(Var loss) {
    const Tensor<R>& L = val(loss);
    if (L.rows != 1 || L.cols != 1)
      throw std::invalid_argument("backward: loss must be 1x1, got " +
                                  shape_str(L.rows, L.cols));
    for (Node& n : nodes_) n.adj.clear();
    adj_of(loss)[0] = R(1);
    for (Var v = loss; v >= 0; --v) {
      Node& n = nodes_[v];
      if (n.pull && n.needs_grad && !n.adj.empty()) n.pull(*this);
    }
    for (Node& n : nodes_) {
      if (!n.needs_grad || n.adj.empty()) continue;
      if (n.grad_acc.empty()) n.grad_acc.assign(n.value.size(), R(0));
      for (size_t i = 0; i < n.adj.size(); ++i) n.grad_acc[i] += n.adj[i];
    }
  }

 private:
  std::vector<Node> nodes_;

  std::vector<R>& adj_of(Var v) {
    Node& n = nodes_[v];
    if (n.adj.empty()) n.adj.assign(n.value.size(), R(0));
    return n.adj;
  }

  static void check_finite(const Tensor<R>& t, const char* op) {
    if (!t.all_finite())
      throw std::runtime_error(std::string("non-finite value out of ") + op);
  }

  template <class F>
  Var record(Tensor<R> out, std::initializer_list<Var> parents, F&& pull) {
    check_finite(out, "op");
    Node n;
    n.value = std::move(out);
    for (Var p : parents) n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
    if (n.needs_grad) {
      Var self = static_cast<Var>(nodes_.size());
      n.pull = [self, f = std::forward<F>(pull)](Tape& t) { f(t, self); };
    }
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }

  template <class FwdF, class DerF>
  Var unary_elementwise(Var a, FwdF fwd, DerF der) {
    const Tensor<R>& A = val(a);
    Tensor<R> out(A.rows, A.cols);
    for (size_t i = 0; i < A.size(); ++i) out.data[i] = fwd(A.data[i]);
    return record(std::move(out), {a}, [a, der](Tape& t, Var o) {
      if (!t.nodes_[a].needs_grad) return;
      const auto& g = t.nodes_[o].adj;
      const Tensor<R>& A = t.val(a);
      const Tensor<R>& Y = t.val(o);
      auto& ga = t.adj_of(a);
      for (size_t i = 0; i < g.size(); ++i)
        ga[i] += g[i] * der(A.data[i], Y.data[i]);
    });
  }

  template <class FwdF, class DerF>
  Var binary_elementwise(Var a, Var b, const char* name, FwdF fwd, DerF der) {
    const Tensor<R>& A = val(a);
    const Tensor<R>& B = val(b);
    if (!A.same_shape(B))
      throw std::invalid_argument(std::string(name) + ": shape " +
                                  shape_str(A.rows, A.cols) + " vs " +
                                  shape_str(B.rows, B.cols));
    Tensor<R> out(A.rows, A.cols);
    for (size_t i = 0; i < A.size(); ++i)
      out.data[i] = fwd(A.data[i], B.data[i]);
    return record(std::move(out), {a, b}, [a, b, der](Tape& t, Var o) {
      const auto& g = t.nodes_[o].adj;
      const Tensor<R>& A = t.val(a);
      const Tensor<R>& B = t.val(b);
      bool na = t.nodes_[a].needs_grad, nb = t.nodes_[b].needs_grad;
      for (size_t i = 0; i < g.size(); ++i) {
        auto [da, db] = der(A.data[i], B.data[i], g[i]);
        if (na) t.adj_of(a)[i] += da;
        if (nb) t.adj_of(b)[i] += db;
      }
    });
  }
};

}  // namespace gma

#endif  // GMA_TAPE_HPP
