#ifndef GMA_MODEL_GRADCHECK_HPP
#define GMA_MODEL_GRADCHECK_HPP

#include <vector>

#include "gma/gradcheck.hpp"
#include "gma/model.hpp"
#include "gma/synthetic.hpp"

namespace gma {

/// Central-difference check of the whole network: loss of one synthetic
/// example differentiated w.r.t. every parameter (GMA stacks, GRU, head).
/// Double precision, dropout off. Returns the max relative error.
inline double model_grad_check(const RunConfig& cfg, uint64_t seed,
                               double eps = 1e-5) {
  GmaModel<double> model(cfg);
  SyntheticGenerator<double> gen(cfg, seed);
  SyntheticExample<double> ex = gen.next();
  Tensor<double> target = one_hot_target<double>(ex.answer, cfg.n_answers);

  auto loss_value = [&] {
    Tape<double> tape;
    ForwardOptions<double> opt;
    auto r = model.forward(tape, ex.input, &target, opt);
    return tape.val(r.loss).at(0, 0);
  };

  Tape<double> tape;
  ForwardOptions<double> opt;
  auto result = model.forward(tape, ex.input, &target, opt);
  tape.backward(result.loss);

  std::vector<Tensor<double>*> params;
  std::vector<Tensor<double>> analytic;
  auto named = model.named_params();
  for (size_t i = 0; i < named.size(); ++i) {
    params.push_back(named[i].second);
    analytic.push_back(tape.grad(result.param_vars[i]));
  }
  return grad_check_adaptive(loss_value, params, analytic, eps);
}

/// The configuration grad-check sizes used by the CLI and the test suites.
inline RunConfig grad_check_config(bool medium = false) {
  RunConfig cfg = RunConfig::desk_preset();
  if (medium) {
    cfg.k1 = 6; cfg.k2 = 5; cfg.d = 12; cfg.d_roi = 8; cfg.d_emb = 8;
    cfg.head_hidden = 12;
  } else {
    cfg.k1 = 5; cfg.k2 = 4; cfg.d = 8; cfg.d_roi = 6; cfg.d_emb = 6;
    cfg.head_hidden = 8;
  }
  cfg.n_answers = 4;
  cfg.n_stack = 3;
  return cfg;
}

}  // namespace gma

#endif  // GMA_MODEL_GRADCHECK_HPP
