#ifndef GMA_GRU_HPP
#define GMA_GRU_HPP

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "gma/tape.hpp"
#include "gma/tensor.hpp"

namespace gma {

/// One GRU direction: update gate z, reset gate r, candidate h~.
///   z  = sigmoid(x Wz + h Uz + bz)
///   r  = sigmoid(x Wr + h Ur + br)
///   h~ = tanh(x Wh + (r * h) Uh + bh)
///   h' = (1 - z) * h + z * h~
template <class R = double>
struct GruDirectionParams {
  Tensor<R> wz, uz, bz;
  Tensor<R> wr, ur, br;
  Tensor<R> wh, uh, bh;

  static GruDirectionParams init(int in_dim, int hidden,
                                 std::mt19937_64& rng) {
    GruDirectionParams p;
    p.wz = Tensor<R>::uniform_fan_in(in_dim, hidden, in_dim, rng);
    p.uz = Tensor<R>::uniform_fan_in(hidden, hidden, hidden, rng);
    p.bz = Tensor<R>(1, hidden);
    p.wr = Tensor<R>::uniform_fan_in(in_dim, hidden, in_dim, rng);
    p.ur = Tensor<R>::uniform_fan_in(hidden, hidden, hidden, rng);
    p.br = Tensor<R>(1, hidden);
    p.wh = Tensor<R>::uniform_fan_in(in_dim, hidden, in_dim, rng);
    p.uh = Tensor<R>::uniform_fan_in(hidden, hidden, hidden, rng);
    p.bh = Tensor<R>(1, hidden);
    return p;
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".wz", wz); f(prefix + ".uz", uz); f(prefix + ".bz", bz);
    f(prefix + ".wr", wr); f(prefix + ".ur", ur); f(prefix + ".br", br);
    f(prefix + ".wh", wh); f(prefix + ".uh", uh); f(prefix + ".bh", bh);
  }
};

/// Bidirectional GRU: forward and backward passes over the sequence, final
/// states concatenated and projected to out_dim.
template <class R = double>
struct GruParams {
  GruDirectionParams<R> fwd, bwd;
  Tensor<R> proj_w, proj_b;  // (2*hidden) x out_dim, 1 x out_dim
  int in_dim = 0, hidden = 0, out_dim = 0;

  static GruParams init(int in_dim, int hidden, int out_dim,
                        std::mt19937_64& rng) {
    GruParams p;
    p.in_dim = in_dim;
    p.hidden = hidden;
    p.out_dim = out_dim;
    p.fwd = GruDirectionParams<R>::init(in_dim, hidden, rng);
    p.bwd = GruDirectionParams<R>::init(in_dim, hidden, rng);
    p.proj_w = Tensor<R>::uniform_fan_in(2 * hidden, out_dim, 2 * hidden, rng);
    p.proj_b = Tensor<R>(1, out_dim);
    return p;
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    fwd.visit(prefix + ".fwd", f);
    bwd.visit(prefix + ".bwd", f);
    f(prefix + ".proj_w", proj_w);
    f(prefix + ".proj_b", proj_b);
  }
};

template <class R = double>
struct GruDirectionVars {
  Var wz, uz, bz, wr, ur, br, wh, uh, bh;

  static GruDirectionVars make(Tape<R>& t, const GruDirectionParams<R>& p,
                               bool trainable) {
    return {t.leaf(p.wz, trainable), t.leaf(p.uz, trainable),
            t.leaf(p.bz, trainable), t.leaf(p.wr, trainable),
            t.leaf(p.ur, trainable), t.leaf(p.br, trainable),
            t.leaf(p.wh, trainable), t.leaf(p.uh, trainable),
            t.leaf(p.bh, trainable)};
  }
};

template <class R = double>
struct GruVars {
  GruDirectionVars<R> fwd, bwd;
  Var proj_w, proj_b;
  int hidden = 0;

  static GruVars make(Tape<R>& t, const GruParams<R>& p, bool trainable) {
    return {GruDirectionVars<R>::make(t, p.fwd, trainable),
            GruDirectionVars<R>::make(t, p.bwd, trainable),
            t.leaf(p.proj_w, trainable), t.leaf(p.proj_b, trainable),
            p.hidden};
  }
};

/// Run one direction over the sequence (each element a 1 x in_dim Var) and
/// return the final hidden state, 1 x hidden. Zero initial state.
template <class R>
Var gru_direction(Tape<R>& t, const std::vector<Var>& seq,
                  const GruDirectionVars<R>& p) {
  if (seq.empty()) throw std::invalid_argument("gru_direction: empty sequence");
  int hidden = t.cols(p.bz);
  Var h = t.leaf(Tensor<R>(1, hidden));
  Var one = t.leaf(Tensor<R>::ones(1, hidden));
  for (Var x : seq) {
    Var z = t.sigmoid(t.add_rowvec(
        t.add(t.matmul(x, p.wz), t.matmul(h, p.uz)), p.bz));
    Var r = t.sigmoid(t.add_rowvec(
        t.add(t.matmul(x, p.wr), t.matmul(h, p.ur)), p.br));
    Var cand = t.tanh_(t.add_rowvec(
        t.add(t.matmul(x, p.wh), t.matmul(t.elementwise_mul(r, h), p.uh)),
        p.bh));
    h = t.add(t.elementwise_mul(t.sub(one, z), h),
              t.elementwise_mul(z, cand));
  }
  return h;
}

/// Bi-GRU sequence embedding: projection of the concatenated final forward
/// and backward states, 1 x out_dim.
template <class R>
Var bigru_encode(Tape<R>& t, const std::vector<Var>& seq,
                 const GruVars<R>& p) {
  if (seq.empty()) throw std::invalid_argument("bigru_encode: empty sequence");
  Var hf = gru_direction(t, seq, p.fwd);
  std::vector<Var> rev(seq.rbegin(), seq.rend());
  Var hb = gru_direction(t, rev, p.bwd);
  return t.add_rowvec(t.matmul(t.concat_cols(hf, hb), p.proj_w), p.proj_b);
}

/// Plain-tensor convenience wrapper; runs a private tape, forward only.
template <class R>
Tensor<R> bigru_encode(const std::vector<Tensor<R>>& seq,
                       const GruParams<R>& params) {
  Tape<R> t;
  GruVars<R> vars = GruVars<R>::make(t, params, false);
  std::vector<Var> xs;
  for (const Tensor<R>& x : seq) xs.push_back(t.leaf(x));
  return t.val(bigru_encode(t, xs, vars));
}

}  // namespace gma

#endif  // GMA_GRU_HPP
