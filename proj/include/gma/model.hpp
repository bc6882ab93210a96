#ifndef GMA_MODEL_HPP
#define GMA_MODEL_HPP

#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gma/config.hpp"
#include "gma/gma_module.hpp"
#include "gma/gru.hpp"
#include "gma/head.hpp"
#include "gma/question_graph.hpp"
#include "gma/tape.hpp"
#include "gma/tensor.hpp"

namespace gma {

/// One example's worth of model input: a built visual graph plus the
/// question structure with per-token embedding rows (1 x d_emb each).
template <class R = double>
struct ModelInput {
  Tensor<R> visual_nodes;  // K1 x (d_roi + 4)
  Tensor<R> visual_edges;  // K1 x K1
  std::vector<uint8_t> visual_mask;
  QuestionStructure<R> question;
  std::vector<Tensor<R>> tokens;
};

template <class R = double>
struct ModelParams {
  std::vector<GmaParams<R>> stacks;
  GruParams<R> gru;
  HeadParams<R> head;

  template <class F>
  void visit(F&& f) {
    for (size_t i = 0; i < stacks.size(); ++i)
      stacks[i].visit("stack" + std::to_string(i), f);
    gru.visit("gru", f);
    head.visit("head", f);
  }
};

template <class R = double>
struct ForwardOptions {
  bool training = false;
  bool collect_trace = false;
  std::mt19937_64* rng = nullptr;  // required when training (dropout)
};

template <class R = double>
struct ForwardResult {
  Var logits = -1;
  Var loss = -1;  // -1 when no targets were given
  Prediction prediction;
  std::vector<AttentionTrace<R>> traces;
  // tape handles for every parameter, aligned with named_params() order
  std::vector<Var> param_vars;
};

/// The full network: graph encoders, stacked GMA modules and the answer
/// head, driven by one RunConfig. Owns all trainable tensors.
template <class R = double>
class GmaModel {
 public:
  explicit GmaModel(const RunConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    int d_in_v = cfg_.d_roi + 4;
    int n_modules = cfg_.share_stack_params ? std::min(cfg_.n_stack, 2)
                                            : cfg_.n_stack;
    for (int i = 0; i < n_modules; ++i) {
      int in_v = i == 0 ? d_in_v : cfg_.d;
      int in_q = cfg_.d;
      params_.stacks.push_back(
          GmaParams<R>::init(in_v, in_q, cfg_.d, rng));
    }
    params_.gru =
        GruParams<R>::init(cfg_.d_emb, cfg_.d / 2, cfg_.d, rng);
    params_.head = HeadParams<R>::init(cfg_.d, cfg_.head_hidden,
                                       cfg_.n_answers, rng);
  }

  const RunConfig& config() const { return cfg_; }
  ModelParams<R>& params() { return params_; }

  std::vector<std::pair<std::string, Tensor<R>*>> named_params() {
    std::vector<std::pair<std::string, Tensor<R>*>> out;
    params_.visit([&](const std::string& name, Tensor<R>& t) {
      out.emplace_back(name, &t);
    });
    return out;
  }

  ForwardResult<R> forward(Tape<R>& tape, const ModelInput<R>& input,
                           const Tensor<R>* targets,
                           const ForwardOptions<R>& opt) {
    if (opt.training && !opt.rng)
      throw std::invalid_argument("forward: training mode needs an rng");
    ForwardResult<R> result;

    // parameter leaves, in named_params order
    std::vector<GmaVars<R>> stack_vars;
    GruVars<R> gru_vars{};
    HeadVars<R> head_vars{};
    for (auto& g : params_.stacks)
      stack_vars.push_back(GmaVars<R>::make(tape, g, true));
    gru_vars = GruVars<R>::make(tape, params_.gru, true);
    head_vars = HeadVars<R>::make(tape, params_.head, true);
    collect_param_vars(stack_vars, gru_vars, head_vars, result.param_vars);

    auto drop = [&](Var v, double p) {
      return opt.training ? tape.dropout(v, p, true, *opt.rng) : v;
    };

    // graph structure (constant w.r.t. parameters)
    Tensor<R> lap_m =
        normalized_laplacian(input.visual_edges, input.visual_mask);
    Tensor<R> lap_n =
        normalized_laplacian(input.question.edges, input.question.node_mask);

    GmaState<R> state;
    state.lap_m = tape.leaf(std::move(lap_m));
    state.lap_n = tape.leaf(std::move(lap_n));
    state.mask_v = input.visual_mask;
    state.mask_q = input.question.node_mask;
    state.v_m = drop(tape.leaf(input.visual_nodes), cfg_.dropout_image);

    std::vector<Var> token_vars;
    for (const Tensor<R>& tok : input.tokens)
      token_vars.push_back(drop(tape.leaf(tok), cfg_.dropout_words));
    QuestionEncoding<R> q_enc =
        encode_question(tape, input.question, token_vars, gru_vars);
    state.v_n = drop(q_enc.nodes, cfg_.dropout_question);
    Var q = drop(q_enc.q, cfg_.dropout_question);

    GmaOptions<R> gma_opt;
    gma_opt.tau = static_cast<R>(cfg_.effective_tau());
    gma_opt.similarity = cfg_.similarity;
    gma_opt.encoder = cfg_.encoder;

    std::vector<GmaVars<R>> modules;
    for (int i = 0; i < cfg_.n_stack; ++i)
      modules.push_back(
          stack_vars[std::min<size_t>(i, stack_vars.size() - 1)]);
    state = stack_forward(tape, state, modules, gma_opt,
                          opt.collect_trace ? &result.traces : nullptr);

    Var h = fuse_and_pool(tape, state.v_m, state.v_n, state.mask_v,
                          state.mask_q);
    h = drop(h, cfg_.dropout_reason);
    result.logits = predict_logits(tape, h, q, head_vars);
    result.prediction = prediction_from_logits(tape.val(result.logits));
    if (targets) result.loss = soft_loss(tape, result.logits, *targets);
    return result;
  }

 private:
  RunConfig cfg_;
  ModelParams<R> params_;

  void collect_param_vars(const std::vector<GmaVars<R>>& stacks,
                          const GruVars<R>& gru, const HeadVars<R>& head,
                          std::vector<Var>& out) {
    for (const GmaVars<R>& s : stacks) {
      out.insert(out.end(), {s.fc_v_w, s.fc_v_b, s.fc_q_w, s.fc_q_b, s.w1,
                             s.w2, s.w3, s.a_w, s.w4, s.w5});
    }
    for (const GruDirectionVars<R>* d : {&gru.fwd, &gru.bwd})
      out.insert(out.end(), {d->wz, d->uz, d->bz, d->wr, d->ur, d->br, d->wh,
                             d->uh, d->bh});
    out.insert(out.end(), {gru.proj_w, gru.proj_b});
    out.insert(out.end(), {head.w1, head.b1, head.w2, head.b2});
  }
};

template <class R>
nlohmann::json tensor_to_json(const Tensor<R>& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < t.rows; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < t.cols; ++j) row.push_back(t.at(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Attention dump for qualitative inspection: one record per stacked module.
template <class R>
nlohmann::json traces_to_json(const std::vector<AttentionTrace<R>>& traces) {
  nlohmann::json out = nlohmann::json::array();
  for (size_t i = 0; i < traces.size(); ++i) {
    out.push_back({{"module", i},
                   {"S_log", tensor_to_json(traces[i].s_log)},
                   {"P_v_from_q", tensor_to_json(traces[i].p_v_from_q)},
                   {"P_q_from_v", tensor_to_json(traces[i].p_q_from_v)},
                   {"A_m", tensor_to_json(traces[i].a_m)},
                   {"A_n", tensor_to_json(traces[i].a_n)}});
  }
  return out;
}

}  // namespace gma

#endif  // GMA_MODEL_HPP
