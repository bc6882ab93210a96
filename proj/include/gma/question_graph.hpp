#ifndef GMA_QUESTION_GRAPH_HPP
#define GMA_QUESTION_GRAPH_HPP

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "gma/conllu.hpp"
#include "gma/embeddings.hpp"
#include "gma/gru.hpp"
#include "gma/tape.hpp"
#include "gma/tensor.hpp"

namespace gma {

/// Structural part of the question graph, before any embedding: which token
/// group feeds each node and which head->dependent edges exist. Sentences
/// longer than K2 are truncated to the first K2 tokens; edges touching
/// dropped tokens are removed.
template <class R = double>
struct QuestionStructure {
  int n_tokens = 0;                      // valid node count, <= K2
  std::vector<std::vector<int>> groups;  // per valid node: 0-based kept
                                         // token indices in sentence order
  Tensor<R> edges;                       // K2 x K2 directed, self-loops on
                                         // valid nodes
  std::vector<uint8_t> node_mask;        // length K2
};

template <class R = double>
QuestionStructure<R> build_question_structure(const DependencyParse& parse,
                                              int k2) {
  if (parse.tokens.empty())
    throw std::invalid_argument("build_question_structure: empty parse");
  int n = std::min<int>(static_cast<int>(parse.tokens.size()), k2);
  QuestionStructure<R> s;
  s.n_tokens = n;
  s.edges = Tensor<R>(k2, k2);
  s.node_mask.assign(k2, 0);
  for (int i = 0; i < n; ++i) {
    s.node_mask[i] = 1;
    s.edges.at(i, i) = R(1);
    int head = parse.tokens[i].head;  // 1-based, 0 = root
    if (head >= 1 && head <= n) s.edges.at(head - 1, i) = R(1);
  }
  // node group = token itself, its head, and its direct dependents, all in
  // sentence order and restricted to kept tokens
  s.groups.resize(n);
  for (int i = 0; i < n; ++i) {
    std::vector<uint8_t> in_group(n, 0);
    in_group[i] = 1;
    int head = parse.tokens[i].head;
    if (head >= 1 && head <= n) in_group[head - 1] = 1;
    for (int j = 0; j < n; ++j)
      if (parse.tokens[j].head == i + 1) in_group[j] = 1;
    for (int j = 0; j < n; ++j)
      if (in_group[j]) s.groups[i].push_back(j);
  }
  return s;
}

template <class R = double>
struct QuestionEncoding {
  Var nodes = -1;  // K2 x d, padded rows zero
  Var q = -1;      // 1 x d global question vector
};

/// Tape-level encoding: each node is the Bi-GRU embedding of its word group,
/// the global vector q is the Bi-GRU embedding of the whole sentence.
/// `token_vars` holds one 1 x d_emb Var per kept token (callers may have
/// applied embedding dropout already).
template <class R>
QuestionEncoding<R> encode_question(Tape<R>& t,
                                    const QuestionStructure<R>& s,
                                    const std::vector<Var>& token_vars,
                                    const GruVars<R>& gru) {
  if (static_cast<int>(token_vars.size()) != s.n_tokens)
    throw std::invalid_argument("encode_question: token count mismatch");
  int k2 = static_cast<int>(s.node_mask.size());
  int d = t.cols(gru.proj_w);

  QuestionEncoding<R> out;
  Var nodes = -1;
  for (int i = 0; i < s.n_tokens; ++i) {
    std::vector<Var> group;
    for (int j : s.groups[i]) group.push_back(token_vars[j]);
    Var row = bigru_encode(t, group, gru);
    nodes = (i == 0) ? row : t.concat_rows(nodes, row);
  }
  if (s.n_tokens < k2) {
    Var pad = t.leaf(Tensor<R>(k2 - s.n_tokens, d));
    nodes = t.concat_rows(nodes, pad);
  }
  out.nodes = nodes;
  out.q = bigru_encode(t, token_vars, gru);
  return out;
}

/// Fully materialized question graph (Eq.-style plain tensors), for
/// inspection paths and file export.
template <class R = double>
struct QuestionGraph {
  Tensor<R> nodes;  // K2 x d
  Tensor<R> edges;  // K2 x K2 directed binary
  std::vector<uint8_t> node_mask;
  Tensor<R> q;  // 1 x d
};

template <class R = double>
QuestionGraph<R> build_question_graph(const DependencyParse& parse,
                                      const EmbeddingTable& emb,
                                      const GruParams<R>& gru, int k2) {
  QuestionStructure<R> s = build_question_structure<R>(parse, k2);
  Tape<R> t;
  GruVars<R> vars = GruVars<R>::make(t, gru, false);
  std::vector<Var> tokens;
  for (int i = 0; i < s.n_tokens; ++i) {
    std::vector<double> v = emb.lookup(parse.tokens[i].form);
    Tensor<R> row(1, emb.dim());
    for (int j = 0; j < emb.dim(); ++j) row.at(0, j) = static_cast<R>(v[j]);
    tokens.push_back(t.leaf(std::move(row)));
  }
  QuestionEncoding<R> enc = encode_question(t, s, tokens, vars);
  QuestionGraph<R> g;
  g.nodes = t.val(enc.nodes);
  g.edges = s.edges;
  g.node_mask = s.node_mask;
  g.q = t.val(enc.q);
  return g;
}

}  // namespace gma

#endif  // GMA_QUESTION_GRAPH_HPP
