#ifndef GMA_HEAD_HPP
#define GMA_HEAD_HPP

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "gma/tape.hpp"
#include "gma/tensor.hpp"

namespace gma {

/// Answer prediction head: two-layer MLP over the question-gated reasoning
/// feature, sigmoid scores per candidate answer.
template <class R = double>
struct HeadParams {
  Tensor<R> w1, b1;  // d -> hidden
  Tensor<R> w2, b2;  // hidden -> N_a

  static HeadParams init(int d, int hidden, int n_answers,
                         std::mt19937_64& rng) {
    if (n_answers < 2) throw std::invalid_argument("HeadParams: N_a < 2");
    HeadParams p;
    p.w1 = Tensor<R>::uniform_fan_in(d, hidden, d, rng);
    p.b1 = Tensor<R>(1, hidden);
    p.w2 = Tensor<R>::uniform_fan_in(hidden, n_answers, hidden, rng);
    p.b2 = Tensor<R>(1, n_answers);
    return p;
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w1", w1); f(prefix + ".b1", b1);
    f(prefix + ".w2", w2); f(prefix + ".b2", b2);
  }
};

template <class R = double>
struct HeadVars {
  Var w1, b1, w2, b2;

  static HeadVars make(Tape<R>& t, const HeadParams<R>& p, bool trainable) {
    return {t.leaf(p.w1, trainable), t.leaf(p.b1, trainable),
            t.leaf(p.w2, trainable), t.leaf(p.b2, trainable)};
  }
};

/// H = relu(V^m (+rows) V^n), then column-wise max over valid rows gives the
/// reasoning feature h (1 x d).
template <class R>
Var fuse_and_pool(Tape<R>& t, Var v_m, Var v_n,
                  const std::vector<uint8_t>& mask_v,
                  const std::vector<uint8_t>& mask_q) {
  Var h_all = t.relu(t.concat_rows(v_m, v_n));
  std::vector<uint8_t> mask = mask_v;
  mask.insert(mask.end(), mask_q.begin(), mask_q.end());
  return t.max_over_rows(h_all, &mask);
}

/// Logits of the candidate answers: MLP(q * h) with a ReLU hidden layer.
/// Scores are sigmoid(logits); the loss consumes the raw logits.
template <class R>
Var predict_logits(Tape<R>& t, Var h, Var q, const HeadVars<R>& p) {
  if (t.rows(h) != 1 || t.rows(q) != 1 || t.cols(h) != t.cols(q))
    throw std::invalid_argument("predict_logits: h and q must be equal 1xd");
  Var gated = t.elementwise_mul(q, h);
  Var hidden = t.relu(t.add_rowvec(t.matmul(gated, p.w1), p.b1));
  return t.add_rowvec(t.matmul(hidden, p.w2), p.b2);
}

struct Prediction {
  std::vector<double> scores;  // sigmoid of logits
  int answer = -1;             // argmax class
};

template <class R>
Prediction prediction_from_logits(const Tensor<R>& logits) {
  Prediction p;
  double best = 0;
  for (int j = 0; j < logits.cols; ++j) {
    double y = static_cast<double>(logits.at(0, j));
    double s = y >= 0 ? 1.0 / (1.0 + std::exp(-y))
                      : std::exp(y) / (1.0 + std::exp(y));
    p.scores.push_back(s);
    if (p.answer < 0 || y > best) {
      best = y;
      p.answer = j;
    }
  }
  return p;
}

/// Multi-label soft loss over logits; delegates to the tape's stable
/// binary-cross-entropy node (gradient sigmoid(y) - t).
template <class R>
Var soft_loss(Tape<R>& t, Var logits, const Tensor<R>& targets) {
  return t.soft_ce_loss(logits, targets);
}

/// VQA consensus accuracy: min(1, votes/3) with votes from 10 annotators.
inline double vqa_accuracy(int votes) {
  if (votes < 0 || votes > 10)
    throw std::invalid_argument("vqa_accuracy: votes outside [0,10]");
  return std::min(1.0, votes / 3.0);
}

}  // namespace gma

#endif  // GMA_HEAD_HPP
