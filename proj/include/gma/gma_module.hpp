#ifndef GMA_GMA_MODULE_HPP
#define GMA_GMA_MODULE_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "gma/tape.hpp"
#include "gma/tensor.hpp"

namespace gma {

enum class SimilarityMode {
  kNegated,  // softmax over -||x_i - x_j||^2 (near neighbours weighted most)
  kLiteral   // softmax over +||x_i - x_j||^2
};

enum class EncoderMode { kDual, kExplicitOnly, kImplicitOnly };

/// Learnable weights of one GMA module. w1/w2 are shared between the two
/// explicit graph convolutions, w3 between the two implicit ones; the FC
/// layers are per-modality.
template <class R = double>
struct GmaParams {
  Tensor<R> fc_v_w, fc_v_b;  // visual input dim -> d
  Tensor<R> fc_q_w, fc_q_b;  // question input dim -> d
  Tensor<R> w1, w2;          // d x d, explicit stage
  Tensor<R> w3;              // d x d, implicit stage
  Tensor<R> a_w;             // d x d affinity weights
  Tensor<R> w4, w5;          // 2d x d update projections

  static GmaParams init(int d_in_v, int d_in_q, int d, std::mt19937_64& rng) {
    GmaParams p;
    p.fc_v_w = Tensor<R>::uniform_fan_in(d_in_v, d, d_in_v, rng);
    p.fc_v_b = Tensor<R>(1, d);
    p.fc_q_w = Tensor<R>::uniform_fan_in(d_in_q, d, d_in_q, rng);
    p.fc_q_b = Tensor<R>(1, d);
    p.w1 = Tensor<R>::uniform_fan_in(d, d, d, rng);
    p.w2 = Tensor<R>::uniform_fan_in(d, d, d, rng);
    // the implicit stage is residual (Eq. 11); starting its projection at
    // zero lets every encoder begin from the explicit-only operating point
    // and learn the similarity branch from nothing, which converges faster
    p.w3 = Tensor<R>(d, d);
    p.a_w = Tensor<R>::uniform_fan_in(d, d, d, rng);
    p.w4 = Tensor<R>::uniform_fan_in(2 * d, d, 2 * d, rng);
    p.w5 = Tensor<R>::uniform_fan_in(2 * d, d, 2 * d, rng);
    return p;
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".fc_v_w", fc_v_w); f(prefix + ".fc_v_b", fc_v_b);
    f(prefix + ".fc_q_w", fc_q_w); f(prefix + ".fc_q_b", fc_q_b);
    f(prefix + ".w1", w1); f(prefix + ".w2", w2); f(prefix + ".w3", w3);
    f(prefix + ".a_w", a_w); f(prefix + ".w4", w4); f(prefix + ".w5", w5);
  }
};

template <class R = double>
struct GmaVars {
  Var fc_v_w, fc_v_b, fc_q_w, fc_q_b;
  Var w1, w2, w3, a_w, w4, w5;

  static GmaVars make(Tape<R>& t, const GmaParams<R>& p, bool trainable) {
    return {t.leaf(p.fc_v_w, trainable), t.leaf(p.fc_v_b, trainable),
            t.leaf(p.fc_q_w, trainable), t.leaf(p.fc_q_b, trainable),
            t.leaf(p.w1, trainable),     t.leaf(p.w2, trainable),
            t.leaf(p.w3, trainable),     t.leaf(p.a_w, trainable),
            t.leaf(p.w4, trainable),     t.leaf(p.w5, trainable)};
  }
};

/// Per-module inspection record: log-affinities and the four row-stochastic
/// attention maps.
template <class R = double>
struct AttentionTrace {
  Tensor<R> s_log;       // K1 x K2
  Tensor<R> p_v_from_q;  // K1 x K2
  Tensor<R> p_q_from_v;  // K2 x K1
  Tensor<R> a_m;         // K1 x K1
  Tensor<R> a_n;         // K2 x K2
};

/// Symmetric normalization D^(-1/2) E D^(-1/2) of a binary edge matrix.
/// Directed matrices are symmetrized (e v e^T) over the valid block first;
/// every valid node must have degree >= 1 (self-loops guarantee this for
/// graphs built by this project).
template <class R>
Tensor<R> normalized_laplacian(const Tensor<R>& edges,
                               const std::vector<uint8_t>& mask) {
  int k = edges.rows;
  if (edges.cols != k || static_cast<int>(mask.size()) != k)
    throw std::invalid_argument("normalized_laplacian: bad shapes");
  Tensor<R> sym(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      if (mask[i] && mask[j])
        sym.at(i, j) =
            (edges.at(i, j) != R(0) || edges.at(j, i) != R(0)) ? R(1) : R(0);
  std::vector<R> inv_sqrt_deg(k, R(0));
  for (int i = 0; i < k; ++i) {
    if (!mask[i]) continue;
    R deg = R(0);
    for (int j = 0; j < k; ++j) deg += sym.at(i, j);
    if (deg <= R(0))
      throw std::runtime_error("normalized_laplacian: zero-degree node " +
                               std::to_string(i));
    inv_sqrt_deg[i] = R(1) / static_cast<R>(std::sqrt(static_cast<double>(deg)));
  }
  Tensor<R> lap(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      lap.at(i, j) = sym.at(i, j) * inv_sqrt_deg[i] * inv_sqrt_deg[j];
  return lap;
}

namespace detail {

template <class R>
Tensor<R> column_mask(int rows, const std::vector<uint8_t>& valid_cols) {
  Tensor<R> m(rows, static_cast<int>(valid_cols.size()));
  for (int i = 0; i < rows; ++i)
    for (size_t j = 0; j < valid_cols.size(); ++j)
      m.at(i, static_cast<int>(j)) = valid_cols[j] ? R(1) : R(0);
  return m;
}

}  // namespace detail

/// FC stage: affine map of node features into the d-dimensional matching
/// space; padded rows re-zeroed (the bias would otherwise leak into them).
template <class R>
Var fc_transform(Tape<R>& t, Var v, Var w, Var b,
                 const std::vector<uint8_t>& mask) {
  return t.mask_rows(t.add_rowvec(t.matmul(v, w), b), mask);
}

/// Explicit stage: X' = relu(W1 (X + W2 (L X))), with weights applied on the
/// feature axis.
template <class R>
Var gconv_explicit(Tape<R>& t, Var x, Var laplacian, Var w1, Var w2) {
  Var agg = t.matmul(t.matmul(laplacian, x), w2);
  return t.relu(t.matmul(t.add(x, agg), w1));
}

/// Implicit adjacency: row-softmax over pairwise squared distances (negated
/// by default so similar nodes weigh most; literal mode keeps the raw sign).
/// Masked columns are excluded from each softmax, masked rows are zero.
template <class R>
Var implicit_adjacency(Tape<R>& t, Var x, const std::vector<uint8_t>& mask,
                       SimilarityMode mode) {
  bool any = false;
  for (uint8_t m : mask) any = any || m;
  if (!any) throw std::invalid_argument("implicit_adjacency: fully masked");
  Var dist = t.pairwise_sqdist(x);
  Var scores = (mode == SimilarityMode::kNegated) ? t.scale(dist, R(-1)) : dist;
  Tensor<R> colmask = detail::column_mask<R>(t.rows(x), mask);
  return t.mask_rows(t.softmax_rows(scores, &colmask), mask);
}

/// Implicit stage: X'' = X' + W3 (A X'), residual form.
template <class R>
Var gconv_implicit(Tape<R>& t, Var x, Var adjacency, Var w3) {
  return t.add(x, t.matmul(t.matmul(adjacency, x), w3));
}

/// Log-affinity: log s_ij = x_i ((A_w + A_w^T)/2) y_j^T / tau. The exp of
/// the affinity is never materialized; downstream softmaxes consume the log
/// scores directly.
template <class R>
Var affinity_log(Tape<R>& t, Var x, Var y, Var a_w, R tau) {
  if (!(tau > R(0))) throw std::invalid_argument("affinity_log: tau <= 0");
  Var sym = t.scale(t.add(a_w, t.transpose(a_w)), R(0.5));
  return t.scale(t.matmul(t.matmul(x, sym), t.transpose(y)), R(1) / tau);
}

template <class R = double>
struct BilateralAttention {
  Var p_v_from_q = -1;  // K1 x K2, rows attend over question nodes
  Var p_q_from_v = -1;  // K2 x K1, rows attend over visual nodes
};

template <class R>
BilateralAttention<R> bilateral_attention(Tape<R>& t, Var s_log,
                                          const std::vector<uint8_t>& mask_v,
                                          const std::vector<uint8_t>& mask_q) {
  Tensor<R> colmask_q = detail::column_mask<R>(t.rows(s_log), mask_q);
  Tensor<R> colmask_v = detail::column_mask<R>(t.cols(s_log), mask_v);
  BilateralAttention<R> out;
  out.p_v_from_q = t.mask_rows(t.softmax_rows(s_log, &colmask_q), mask_v);
  out.p_q_from_v =
      t.mask_rows(t.softmax_rows(t.transpose(s_log), &colmask_v), mask_q);
  return out;
}

/// Cross-modal update: V^m = (X'' (+cols) P_vq Y'') W5 and the mirrored
/// question-side form with W4. Masked rows come out zero.
template <class R>
Var update_visual_nodes(Tape<R>& t, Var x, Var y, Var p_v_from_q, Var w5,
                        const std::vector<uint8_t>& mask_v) {
  return t.mask_rows(t.matmul(t.concat_cols(x, t.matmul(p_v_from_q, y)), w5),
                     mask_v);
}

template <class R>
Var update_question_nodes(Tape<R>& t, Var x, Var y, Var p_q_from_v, Var w4,
                          const std::vector<uint8_t>& mask_q) {
  return t.mask_rows(t.matmul(t.concat_cols(y, t.matmul(p_q_from_v, x)), w4),
                     mask_q);
}

template <class R = double>
struct GmaOptions {
  R tau = R(1);
  SimilarityMode similarity = SimilarityMode::kNegated;
  EncoderMode encoder = EncoderMode::kDual;
  bool collect_trace = false;
};

/// Loop state of one GMA application: current node Vars plus the fixed graph
/// structure (Laplacians precomputed once, outside the tape).
template <class R = double>
struct GmaState {
  Var v_m = -1;  // K1 x d_in (then K1 x d after the first module)
  Var v_n = -1;  // K2 x d_in_q
  Var lap_m = -1;
  Var lap_n = -1;
  std::vector<uint8_t> mask_v, mask_q;
};

/// One GMA module: dual-stage encoder then bilateral matching attention.
/// Edge matrices (through the Laplacians) are left untouched.
template <class R>
GmaState<R> gma_forward(Tape<R>& t, const GmaState<R>& state,
                        const GmaVars<R>& p, const GmaOptions<R>& opt,
                        AttentionTrace<R>* trace = nullptr) {
  Var x = fc_transform(t, state.v_m, p.fc_v_w, p.fc_v_b, state.mask_v);
  Var y = fc_transform(t, state.v_n, p.fc_q_w, p.fc_q_b, state.mask_q);

  Var xp = x, yp = y;
  if (opt.encoder != EncoderMode::kImplicitOnly) {
    xp = gconv_explicit(t, x, state.lap_m, p.w1, p.w2);
    yp = gconv_explicit(t, y, state.lap_n, p.w1, p.w2);
  }

  Var xpp = xp, ypp = yp;
  Var a_m = -1, a_n = -1;
  if (opt.encoder != EncoderMode::kExplicitOnly) {
    a_m = implicit_adjacency(t, xp, state.mask_v, opt.similarity);
    a_n = implicit_adjacency(t, yp, state.mask_q, opt.similarity);
    xpp = gconv_implicit(t, xp, a_m, p.w3);
    ypp = gconv_implicit(t, yp, a_n, p.w3);
  }

  Var s_log = affinity_log(t, xpp, ypp, p.a_w, opt.tau);
  BilateralAttention<R> att =
      bilateral_attention(t, s_log, state.mask_v, state.mask_q);

  GmaState<R> out = state;
  out.v_m = update_visual_nodes(t, xpp, ypp, att.p_v_from_q, p.w5,
                                state.mask_v);
  out.v_n = update_question_nodes(t, xpp, ypp, att.p_q_from_v, p.w4,
                                  state.mask_q);
  if (trace) {
    trace->s_log = t.val(s_log);
    trace->p_v_from_q = t.val(att.p_v_from_q);
    trace->p_q_from_v = t.val(att.p_q_from_v);
    int k1 = t.rows(s_log), k2 = t.cols(s_log);
    trace->a_m = a_m >= 0 ? t.val(a_m) : Tensor<R>(k1, k1);
    trace->a_n = a_n >= 0 ? t.val(a_n) : Tensor<R>(k2, k2);
  }
  return out;
}

/// Stacked application; each module has its own parameters unless the caller
/// passes the same Vars repeatedly.
template <class R>
GmaState<R> stack_forward(Tape<R>& t, const GmaState<R>& state,
                          const std::vector<GmaVars<R>>& modules,
                          const GmaOptions<R>& opt,
                          std::vector<AttentionTrace<R>>* traces = nullptr) {
  if (modules.empty())
    throw std::invalid_argument("stack_forward: no modules");
  GmaState<R> cur = state;
  for (const GmaVars<R>& m : modules) {
    AttentionTrace<R> trace;
    cur = gma_forward(t, cur, m, opt, traces ? &trace : nullptr);
    if (traces) traces->push_back(std::move(trace));
  }
  return cur;
}

}  // namespace gma

#endif  // GMA_GMA_MODULE_HPP
