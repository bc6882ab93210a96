#ifndef GMA_CONFIG_HPP
#define GMA_CONFIG_HPP

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "gma/gma_module.hpp"

namespace gma {

/// Flat key=value run configuration. Paper-scale defaults; desk_preset()
/// shrinks everything to gradient-checkable size.
struct RunConfig {
  // model dimensions
  int k1 = 100;        // visual graph nodes (padded)
  int k2 = 14;         // question graph nodes (truncated/padded)
  int d = 2048;        // hidden dimension
  int d_roi = 2048;    // RoI feature length
  int d_emb = 300;     // word embedding dimension
  int head_hidden = 2048;
  int n_stack = 1;
  int n_answers = 3129;

  // graph construction
  double iou_threshold = 0.3;

  // GMA behaviour
  double tau = 0.0;  // <= 0 means 1/sqrt(d)
  SimilarityMode similarity = SimilarityMode::kNegated;
  EncoderMode encoder = EncoderMode::kDual;
  bool share_stack_params = false;

  // dropout rates
  double dropout_words = 0.25;
  double dropout_question = 0.25;
  double dropout_image = 0.5;
  double dropout_reason = 0.5;

  // optimization
  double lr = 5e-4;          // schedule base
  double lr_fixed = 0.0;     // > 0 overrides the schedule with a constant
  int batch_size = 256;
  int epochs = 35;
  uint64_t seed = 1;

  // synthetic data
  int train_examples = 2000;
  int heldout_examples = 500;
  double synth_noise = 0.05;
  double synth_attr_noise = 0.45;
  double synth_target_bias = 0.8;

  // paths (empty = unused)
  std::string data_path;
  std::string log_path;
  std::string checkpoint_path;
  std::string embeddings_path;

  double effective_tau() const { return tau > 0.0 ? tau : 1.0 / std::sqrt(d); }

  static RunConfig desk_preset() {
    RunConfig c;
    c.k1 = 6;
    c.k2 = 5;
    c.d = 16;
    c.d_roi = 12;
    c.d_emb = 12;
    c.head_hidden = 32;
    c.n_stack = 2;
    c.n_answers = 10;
    c.batch_size = 8;
    c.epochs = 200;
    // at this scale the paper's decaying schedule reaches ~0 long before
    // epoch 200, and heavy dropout starves the small model; use a constant
    // rate and light regularization instead
    c.lr_fixed = 5e-3;
    c.dropout_words = 0.1;
    c.dropout_question = 0.0;
    c.dropout_image = 0.0;
    c.dropout_reason = 0.25;
    c.synth_target_bias = 1.0;
    return c;
  }

  void validate() const {
    auto positive = [](int v, const char* name) {
      if (v <= 0)
        throw std::invalid_argument(std::string("config: ") + name +
                                    " must be positive");
    };
    positive(k1, "k1"); positive(k2, "k2"); positive(d, "d");
    positive(d_roi, "d_roi"); positive(d_emb, "d_emb");
    positive(head_hidden, "head_hidden"); positive(n_stack, "n_stack");
    positive(batch_size, "batch_size"); positive(epochs, "epochs");
    if (d % 2 != 0)
      throw std::invalid_argument("config: d must be even (d/2 per GRU dir)");
    if (n_answers < 2) throw std::invalid_argument("config: n_answers < 2");
    if (iou_threshold < 0.0 || iou_threshold > 1.0)
      throw std::invalid_argument("config: iou_threshold outside [0,1]");
  }
};

inline SimilarityMode similarity_from_string(const std::string& s) {
  if (s == "negated") return SimilarityMode::kNegated;
  if (s == "literal") return SimilarityMode::kLiteral;
  throw std::invalid_argument("config: similarity must be negated|literal");
}

inline std::string to_string(SimilarityMode m) {
  return m == SimilarityMode::kNegated ? "negated" : "literal";
}

inline EncoderMode encoder_from_string(const std::string& s) {
  if (s == "dual") return EncoderMode::kDual;
  if (s == "explicit_only") return EncoderMode::kExplicitOnly;
  if (s == "implicit_only") return EncoderMode::kImplicitOnly;
  throw std::invalid_argument(
      "config: encoder must be dual|explicit_only|implicit_only");
}

inline std::string to_string(EncoderMode m) {
  switch (m) {
    case EncoderMode::kDual: return "dual";
    case EncoderMode::kExplicitOnly: return "explicit_only";
    case EncoderMode::kImplicitOnly: return "implicit_only";
  }
  return "dual";
}

/// Parse key=value lines ('#' comments, blank lines ignored). The GMA_SEED
/// environment variable overrides any configured seed.
inline RunConfig parse_config(const std::string& text,
                              const RunConfig& base = RunConfig()) {
  RunConfig c = base;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected key=value");
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    try {
      if (key == "preset") {
        if (val == "desk") c = RunConfig::desk_preset();
        else if (val != "paper")
          throw std::invalid_argument("unknown preset " + val);
      }
      else if (key == "k1") c.k1 = std::stoi(val);
      else if (key == "k2") c.k2 = std::stoi(val);
      else if (key == "d") c.d = std::stoi(val);
      else if (key == "d_roi") c.d_roi = std::stoi(val);
      else if (key == "d_emb") c.d_emb = std::stoi(val);
      else if (key == "head_hidden") c.head_hidden = std::stoi(val);
      else if (key == "n_stack") c.n_stack = std::stoi(val);
      else if (key == "n_answers") c.n_answers = std::stoi(val);
      else if (key == "iou_threshold") c.iou_threshold = std::stod(val);
      else if (key == "tau") c.tau = std::stod(val);
      else if (key == "similarity") c.similarity = similarity_from_string(val);
      else if (key == "encoder") c.encoder = encoder_from_string(val);
      else if (key == "share_stack_params")
        c.share_stack_params = (val == "1" || val == "true");
      else if (key == "dropout_words") c.dropout_words = std::stod(val);
      else if (key == "dropout_question") c.dropout_question = std::stod(val);
      else if (key == "dropout_image") c.dropout_image = std::stod(val);
      else if (key == "dropout_reason") c.dropout_reason = std::stod(val);
      else if (key == "lr") c.lr = std::stod(val);
      else if (key == "lr_fixed") c.lr_fixed = std::stod(val);
      else if (key == "batch_size") c.batch_size = std::stoi(val);
      else if (key == "epochs") c.epochs = std::stoi(val);
      else if (key == "seed") c.seed = std::stoull(val);
      else if (key == "train_examples") c.train_examples = std::stoi(val);
      else if (key == "heldout_examples") c.heldout_examples = std::stoi(val);
      else if (key == "synth_noise") c.synth_noise = std::stod(val);
      else if (key == "synth_attr_noise") c.synth_attr_noise = std::stod(val);
      else if (key == "synth_target_bias")
        c.synth_target_bias = std::stod(val);
      else if (key == "data") c.data_path = val;
      else if (key == "log") c.log_path = val;
      else if (key == "checkpoint") c.checkpoint_path = val;
      else if (key == "embeddings") c.embeddings_path = val;
      else
        throw std::invalid_argument("unknown key '" + key + "'");
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("config line " + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  if (const char* env = std::getenv("GMA_SEED")) c.seed = std::stoull(env);
  return c;
}

/// Serialization used by checkpoints and log headers; parse_config-readable.
inline std::string config_to_string(const RunConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "k1=" << c.k1 << "\nk2=" << c.k2 << "\nd=" << c.d
      << "\nd_roi=" << c.d_roi << "\nd_emb=" << c.d_emb
      << "\nhead_hidden=" << c.head_hidden << "\nn_stack=" << c.n_stack
      << "\nn_answers=" << c.n_answers
      << "\niou_threshold=" << c.iou_threshold << "\ntau=" << c.tau
      << "\nsimilarity=" << to_string(c.similarity)
      << "\nencoder=" << to_string(c.encoder)
      << "\nshare_stack_params=" << (c.share_stack_params ? 1 : 0)
      << "\ndropout_words=" << c.dropout_words
      << "\ndropout_question=" << c.dropout_question
      << "\ndropout_image=" << c.dropout_image
      << "\ndropout_reason=" << c.dropout_reason << "\nlr=" << c.lr
      << "\nlr_fixed=" << c.lr_fixed << "\nbatch_size=" << c.batch_size
      << "\nepochs=" << c.epochs << "\nseed=" << c.seed
      << "\ntrain_examples=" << c.train_examples
      << "\nheldout_examples=" << c.heldout_examples
      << "\nsynth_noise=" << c.synth_noise
      << "\nsynth_attr_noise=" << c.synth_attr_noise
      << "\nsynth_target_bias=" << c.synth_target_bias << "\n";
  return out.str();
}

}  // namespace gma

#endif  // GMA_CONFIG_HPP
