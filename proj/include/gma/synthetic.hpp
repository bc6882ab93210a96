#ifndef GMA_SYNTHETIC_HPP
#define GMA_SYNTHETIC_HPP

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "gma/config.hpp"
#include "gma/conllu.hpp"
#include "gma/model.hpp"
#include "gma/question_graph.hpp"
#include "gma/visual_graph.hpp"

namespace gma {

/// Desk-scale stand-in for VQA data with a planted cross-graph
/// correspondence. Each visual node carries an identity code (fresh random
/// per example) plus an attribute-cluster centroid; question tokens carry a
/// noisy copy of one node's identity code only. The answer is the cluster of
/// the most-referenced node, so neither modality alone determines it: codes
/// are meaningless without the visual attribute half, and attributes are
/// unreachable without matching codes across the graphs.
template <class R = double>
struct SyntheticExample {
  ModelInput<R> input;
  int answer = 0;
  std::vector<int> token_refs;  // referenced visual node per token
};

template <class R = double>
class SyntheticGenerator {
 public:
  SyntheticGenerator(const RunConfig& cfg, uint64_t seed)
      : cfg_(cfg), rng_(seed) {
    d_attr_ = cfg.d_roi / 2;
    d_code_ = cfg.d_roi - d_attr_;
    if (cfg.d_emb < d_code_)
      throw std::invalid_argument(
          "SyntheticGenerator: d_emb must be >= d_roi - d_roi/2");
    std::normal_distribution<double> n01(0.0, 1.0);
    centroids_.assign(cfg.n_answers, std::vector<R>(d_attr_));
    for (auto& c : centroids_)
      for (R& v : c) v = static_cast<R>(n01(rng_));
  }

  SyntheticExample<R> next() {
    std::normal_distribution<double> n01(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    SyntheticExample<R> ex;

    // two attribute clusters per scene; nodes of the same cluster get
    // heavily overlapping boxes, so the IoU graph groups exactly the nodes
    // whose noisy attributes should be averaged together
    int n_v = std::uniform_int_distribution<int>(2, cfg_.k1)(rng_);
    int c_a = std::uniform_int_distribution<int>(0, cfg_.n_answers - 1)(rng_);
    int c_b = (c_a + 1 +
               std::uniform_int_distribution<int>(0, cfg_.n_answers - 2)(
                   rng_)) % cfg_.n_answers;
    double ax = 5 + u01(rng_) * 20, ay = 5 + u01(rng_) * 20;
    double bx = 55 + u01(rng_) * 20, by = 55 + u01(rng_) * 20;

    std::vector<std::vector<R>> codes(n_v, std::vector<R>(d_code_));
    std::vector<int> clusters(n_v);
    DetectionSet det;
    det.image_id = "synthetic";
    det.image_width = det.image_height = 100.0;
    for (int i = 0; i < n_v; ++i) {
      for (R& v : codes[i]) v = static_cast<R>(n01(rng_));
      clusters[i] = (i < 2) ? (i == 0 ? c_a : c_b)  // both clusters present
                            : (u01(rng_) < 0.5 ? c_a : c_b);
      std::vector<double> feat;
      for (R v : codes[i])
        feat.push_back(static_cast<double>(v) + cfg_.synth_noise * n01(rng_));
      for (R v : centroids_[clusters[i]])
        feat.push_back(static_cast<double>(v) +
                       cfg_.synth_attr_noise * n01(rng_));
      det.features.push_back(std::move(feat));
      double x1 = (clusters[i] == c_a ? ax : bx) + u01(rng_) * 6;
      double y1 = (clusters[i] == c_a ? ay : by) + u01(rng_) * 6;
      det.boxes.push_back(
          {x1, y1, x1 + 15 + u01(rng_) * 5, y1 + 15 + u01(rng_) * 5});
    }
    VisualGraph<R> vg =
        build_visual_graph<R>(det, cfg_.iou_threshold, cfg_.k1);
    ex.input.visual_nodes = std::move(vg.nodes);
    ex.input.visual_edges = std::move(vg.edges);
    ex.input.visual_mask = std::move(vg.node_mask);

    // chain-parse question; tokens mostly reference one target node
    int n_t = std::uniform_int_distribution<int>(2, cfg_.k2)(rng_);
    int target = std::uniform_int_distribution<int>(0, n_v - 1)(rng_);
    DependencyParse parse;
    for (int i = 0; i < n_t; ++i)
      parse.tokens.push_back({i + 1, "tok" + std::to_string(i), i});
    ex.input.question = build_question_structure<R>(parse, cfg_.k2);
    // resample until one node is strictly most-referenced: a tie would have
    // to be broken by node index, which the (permutation-equivariant)
    // network cannot observe, putting a hard ceiling on accuracy
    std::vector<int> ref_count;
    int most = 0;
    for (int attempt = 0; ; ++attempt) {
      ex.token_refs.clear();
      ref_count.assign(n_v, 0);
      for (int i = 0; i < n_t; ++i) {
        int ref = (attempt < 64 && u01(rng_) >= cfg_.synth_target_bias)
                      ? std::uniform_int_distribution<int>(0, n_v - 1)(rng_)
                      : target;
        ex.token_refs.push_back(ref);
        ++ref_count[ref];
      }
      most = 0;
      for (int i = 1; i < n_v; ++i)
        if (ref_count[i] > ref_count[most]) most = i;
      bool unique = true;
      for (int i = 0; i < n_v; ++i)
        if (i != most && ref_count[i] == ref_count[most]) unique = false;
      if (unique) break;
    }
    for (int ref : ex.token_refs) {
      Tensor<R> tok(1, cfg_.d_emb);
      for (int j = 0; j < d_code_; ++j)
        tok.at(0, j) = codes[ref][j] + static_cast<R>(cfg_.synth_noise *
                                                      n01(rng_));
      ex.input.tokens.push_back(std::move(tok));
    }
    ex.answer = clusters[most];
    return ex;
  }

  std::vector<SyntheticExample<R>> generate(int count) {
    std::vector<SyntheticExample<R>> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) out.push_back(next());
    return out;
  }

  int code_dim() const { return d_code_; }

 private:
  RunConfig cfg_;
  std::mt19937_64 rng_;
  int d_attr_ = 0, d_code_ = 0;
  std::vector<std::vector<R>> centroids_;
};

template <class R>
Tensor<R> one_hot_target(int answer, int n_answers) {
  Tensor<R> t(1, n_answers);
  if (answer < 0 || answer >= n_answers)
    throw std::invalid_argument("one_hot_target: class out of range");
  t.at(0, answer) = R(1);
  return t;
}

// ---- dataset (de)serialization --------------------------------------------

template <class R>
Tensor<R> tensor_from_json(const nlohmann::json& j) {
  int rows = static_cast<int>(j.size());
  int cols = rows > 0 ? static_cast<int>(j.at(0).size()) : 0;
  Tensor<R> t(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c)
      t.at(i, c) = static_cast<R>(j.at(i).at(c).template get<double>());
  return t;
}

template <class R>
nlohmann::json example_to_json(const SyntheticExample<R>& ex) {
  nlohmann::json j;
  j["visual_nodes"] = tensor_to_json(ex.input.visual_nodes);
  j["visual_edges"] = tensor_to_json(ex.input.visual_edges);
  j["visual_mask"] = ex.input.visual_mask;
  j["question_edges"] = tensor_to_json(ex.input.question.edges);
  j["question_mask"] = ex.input.question.node_mask;
  j["question_groups"] = ex.input.question.groups;
  j["n_tokens"] = ex.input.question.n_tokens;
  nlohmann::json toks = nlohmann::json::array();
  for (const auto& t : ex.input.tokens) toks.push_back(tensor_to_json(t));
  j["tokens"] = std::move(toks);
  j["answer"] = ex.answer;
  j["token_refs"] = ex.token_refs;
  return j;
}

template <class R>
SyntheticExample<R> example_from_json(const nlohmann::json& j) {
  SyntheticExample<R> ex;
  ex.input.visual_nodes = tensor_from_json<R>(j.at("visual_nodes"));
  ex.input.visual_edges = tensor_from_json<R>(j.at("visual_edges"));
  ex.input.visual_mask =
      j.at("visual_mask").template get<std::vector<uint8_t>>();
  ex.input.question.edges = tensor_from_json<R>(j.at("question_edges"));
  ex.input.question.node_mask =
      j.at("question_mask").template get<std::vector<uint8_t>>();
  ex.input.question.groups =
      j.at("question_groups").template get<std::vector<std::vector<int>>>();
  ex.input.question.n_tokens = j.at("n_tokens").template get<int>();
  for (const auto& t : j.at("tokens"))
    ex.input.tokens.push_back(tensor_from_json<R>(t));
  ex.answer = j.at("answer").template get<int>();
  if (j.contains("token_refs"))
    ex.token_refs = j.at("token_refs").template get<std::vector<int>>();
  return ex;
}

template <class R>
nlohmann::json dataset_to_json(const std::vector<SyntheticExample<R>>& set) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& ex : set) j.push_back(example_to_json(ex));
  return j;
}

template <class R>
std::vector<SyntheticExample<R>> dataset_from_json(const nlohmann::json& j) {
  std::vector<SyntheticExample<R>> out;
  for (const auto& e : j) out.push_back(example_from_json<R>(e));
  return out;
}

}  // namespace gma

#endif  // GMA_SYNTHETIC_HPP
