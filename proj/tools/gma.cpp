// Command-line front end: training, evaluation, gradient checking, graph
// construction and attention export for the graph-matching-attention VQA
// model.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "gma/checkpoint.hpp"
#include "gma/config.hpp"
#include "gma/conllu.hpp"
#include "gma/embeddings.hpp"
#include "gma/model.hpp"
#include "gma/model_gradcheck.hpp"
#include "gma/question_graph.hpp"
#include "gma/synthetic.hpp"
#include "gma/train.hpp"
#include "gma/visual_graph.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<gma::SyntheticExample<double>> load_or_generate(
    const gma::RunConfig& cfg, int count, uint64_t seed_offset) {
  if (!cfg.data_path.empty()) {
    auto j = nlohmann::json::parse(read_file(cfg.data_path));
    return gma::dataset_from_json<double>(j);
  }
  gma::SyntheticGenerator<double> gen(cfg, cfg.seed + seed_offset);
  return gen.generate(count);
}

int cmd_train(const std::string& config_path, const std::string& resume) {
  gma::RunConfig cfg = gma::parse_config(read_file(config_path));
  cfg.validate();
  gma::GmaModel<double> model(cfg);
  gma::Trainer<double> trainer(model);
  if (!resume.empty()) trainer.restore(gma::load_checkpoint(resume));

  // train and held-out sets come from one generator stream: same task
  // (identical answer-cluster centroids), disjoint examples
  std::vector<gma::SyntheticExample<double>> train_set, heldout_set;
  if (!cfg.data_path.empty()) {
    // file-backed data: the tail of the file is the held-out split
    auto all = load_or_generate(cfg, 0, 0);
    size_t heldout = std::min<size_t>(cfg.heldout_examples, all.size() / 5);
    train_set.assign(all.begin(), all.end() - heldout);
    heldout_set.assign(all.end() - heldout, all.end());
  } else {
    gma::SyntheticGenerator<double> gen(cfg, cfg.seed);
    train_set = gen.generate(cfg.train_examples);
    heldout_set = gen.generate(cfg.heldout_examples);
  }

  std::ofstream log_file;
  std::ostream* log = &std::cout;
  if (!cfg.log_path.empty()) {
    log_file.open(cfg.log_path,
                  resume.empty() ? std::ios::trunc : std::ios::app);
    if (!log_file)
      throw std::runtime_error("cannot write log: " + cfg.log_path);
    log = &log_file;
  }
  auto metrics = trainer.train(train_set, heldout_set, log);
  if (!metrics.empty()) {
    std::cerr << "final: " << gma::Trainer<double>::metrics_line(metrics.back())
              << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data) {
  gma::Checkpoint ck = gma::load_checkpoint(checkpoint_path);
  gma::RunConfig cfg = gma::parse_config(ck.config_text);
  gma::GmaModel<double> model(cfg);
  gma::Trainer<double> trainer(model);
  trainer.restore(ck);

  auto j = nlohmann::json::parse(read_file(data));
  auto set = gma::dataset_from_json<double>(j);
  gma::EvalMetrics m = gma::evaluate(model, set);

  // VQA consensus accuracy when per-class vote counts accompany examples
  double vqa_sum = 0;
  int vqa_n = 0;
  for (size_t i = 0; i < set.size(); ++i) {
    if (!j.at(i).contains("votes")) continue;
    auto votes = j.at(i).at("votes").get<std::vector<int>>();
    gma::Tape<double> tape;
    gma::ForwardOptions<double> opt;
    auto r = model.forward(tape, set[i].input, nullptr, opt);
    vqa_sum += gma::vqa_accuracy(votes.at(r.prediction.answer));
    ++vqa_n;
  }

  nlohmann::json out;
  out["examples"] = m.count;
  out["accuracy"] = m.accuracy;
  out["mean_loss"] = m.mean_loss;
  if (vqa_n > 0) out["vqa_accuracy"] = vqa_sum / vqa_n;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_grad_check(const std::string& size) {
  gma::RunConfig cfg = gma::grad_check_config(size == "medium");
  double err = gma::model_grad_check(cfg, 42);
  std::cout << "max relative error: " << err << "\n";
  return err < 1e-4 ? 0 : 1;
}

int cmd_build_graphs(const std::string& detections_path,
                     const std::string& parses_path,
                     const std::string& out_path,
                     const std::string& embeddings_path, uint64_t seed,
                     int k1, int k2, int d, double iou_threshold) {
  auto det_json = nlohmann::json::parse(read_file(detections_path));
  std::vector<gma::DetectionSet> detections;
  if (det_json.is_array())
    for (const auto& j : det_json)
      detections.push_back(gma::detection_set_from_json(j));
  else
    detections.push_back(gma::detection_set_from_json(det_json));

  auto parses = gma::read_conllu(read_file(parses_path));
  if (parses.size() != detections.size())
    throw std::runtime_error("build-graphs: " +
                             std::to_string(detections.size()) +
                             " images vs " + std::to_string(parses.size()) +
                             " parses");

  int d_emb = 300;
  gma::EmbeddingTable emb =
      embeddings_path.empty()
          ? gma::EmbeddingTable(d_emb, gma::OovPolicy::kHashedRandom, seed)
          : gma::EmbeddingTable::load(read_file(embeddings_path), d_emb,
                                      gma::OovPolicy::kHashedRandom, seed);
  std::mt19937_64 rng(seed);
  auto gru = gma::GruParams<double>::init(d_emb, d / 2, d, rng);

  nlohmann::json out = nlohmann::json::array();
  for (size_t i = 0; i < detections.size(); ++i) {
    auto vg = gma::build_visual_graph<double>(detections[i], iou_threshold, k1);
    auto qg = gma::build_question_graph<double>(parses[i], emb, gru, k2);
    nlohmann::json rec;
    rec["image_id"] = detections[i].image_id;
    rec["visual"] = {{"nodes", gma::tensor_to_json(vg.nodes)},
                     {"edges", gma::tensor_to_json(vg.edges)},
                     {"mask", vg.node_mask}};
    rec["question"] = {{"nodes", gma::tensor_to_json(qg.nodes)},
                       {"edges", gma::tensor_to_json(qg.edges)},
                       {"mask", qg.node_mask},
                       {"q", gma::tensor_to_json(qg.q)}};
    out.push_back(std::move(rec));
  }
  std::ofstream f(out_path);
  if (!f) throw std::runtime_error("cannot write " + out_path);
  f << out.dump(2) << "\n";
  std::cout << "wrote " << detections.size() << " graph pairs to " << out_path
            << "\n";
  return 0;
}

int cmd_dump_attention(const std::string& checkpoint_path, int example,
                       const std::string& out_path) {
  gma::Checkpoint ck = gma::load_checkpoint(checkpoint_path);
  gma::RunConfig cfg = gma::parse_config(ck.config_text);
  gma::GmaModel<double> model(cfg);
  gma::Trainer<double> trainer(model);
  trainer.restore(ck);

  gma::SyntheticGenerator<double> gen(cfg, cfg.seed);
  if (example < 0) throw std::runtime_error("dump-attention: negative index");
  gma::SyntheticExample<double> ex;
  for (int i = 0; i <= example; ++i) ex = gen.next();

  gma::Tape<double> tape;
  gma::ForwardOptions<double> opt;
  opt.collect_trace = true;
  auto r = model.forward(tape, ex.input, nullptr, opt);

  nlohmann::json out;
  out["example"] = example;
  out["answer"] = ex.answer;
  out["predicted"] = r.prediction.answer;
  out["modules"] = gma::traces_to_json(r.traces);
  std::ofstream f(out_path);
  if (!f) throw std::runtime_error("cannot write " + out_path);
  f << out.dump(2) << "\n";
  std::cout << "wrote attention trace to " << out_path << "\n";
  return 0;
}

int cmd_synth(const std::string& out_path, uint64_t seed,
              const std::string& config_path, int count) {
  gma::RunConfig cfg = config_path.empty()
                           ? gma::RunConfig::desk_preset()
                           : gma::parse_config(read_file(config_path));
  cfg.validate();
  gma::SyntheticGenerator<double> gen(cfg, seed);
  auto set = gen.generate(count > 0 ? count : cfg.train_examples);
  std::ofstream f(out_path);
  if (!f) throw std::runtime_error("cannot write " + out_path);
  f << gma::dataset_to_json(set).dump() << "\n";
  std::cout << "wrote " << set.size() << " examples to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph matching attention VQA model"};
  app.require_subcommand(1);

  std::string config_path, resume_path;
  auto* train = app.add_subcommand("train", "train from a config file");
  train->add_option("--config", config_path, "key=value config file")
      ->required();
  train->add_option("--resume", resume_path, "checkpoint to resume from");

  std::string eval_ckpt, eval_data;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--data", eval_data, "dataset JSON")->required();

  std::string gc_size = "small";
  auto* gc = app.add_subcommand("grad-check",
                                "finite-difference check of all gradients");
  gc->add_option("--size", gc_size)
      ->check(CLI::IsMember({"small", "medium"}));

  std::string bg_det, bg_parses, bg_out, bg_emb;
  uint64_t bg_seed = 1;
  int bg_k1 = 100, bg_k2 = 14, bg_d = 2048;
  double bg_iou = 0.3;
  auto* bg = app.add_subcommand("build-graphs",
                                "build visual/question graphs from files");
  bg->add_option("--detections", bg_det)->required();
  bg->add_option("--parses", bg_parses)->required();
  bg->add_option("--out", bg_out)->required();
  bg->add_option("--embeddings", bg_emb, "GloVe-style embedding file");
  bg->add_option("--seed", bg_seed);
  bg->add_option("--k1", bg_k1);
  bg->add_option("--k2", bg_k2);
  bg->add_option("--d", bg_d);
  bg->add_option("--iou-threshold", bg_iou);

  std::string da_ckpt, da_out;
  int da_example = 0;
  auto* da = app.add_subcommand("dump-attention",
                                "export per-module attention maps as JSON");
  da->add_option("--checkpoint", da_ckpt)->required();
  da->add_option("--example", da_example)->required();
  da->add_option("--out", da_out)->required();

  std::string sy_out, sy_config;
  uint64_t sy_seed = 1;
  int sy_count = 0;
  auto* sy = app.add_subcommand("synth", "generate a synthetic dataset");
  sy->add_option("--out", sy_out)->required();
  sy->add_option("--seed", sy_seed)->required();
  sy->add_option("--config", sy_config);
  sy->add_option("--count", sy_count);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (*train) return cmd_train(config_path, resume_path);
    if (*eval) return cmd_eval(eval_ckpt, eval_data);
    if (*gc) return cmd_grad_check(gc_size);
    if (*bg)
      return cmd_build_graphs(bg_det, bg_parses, bg_out, bg_emb, bg_seed,
                              bg_k1, bg_k2, bg_d, bg_iou);
    if (*da) return cmd_dump_attention(da_ckpt, da_example, da_out);
    if (*sy) return cmd_synth(sy_out, sy_seed, sy_config, sy_count);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    // missing/unreadable inputs are usage-level failures
    std::string what = e.what();
    return what.find("cannot read file") != std::string::npos ? 2 : 1;
  }
  return 0;
}
