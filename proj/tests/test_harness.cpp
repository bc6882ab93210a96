#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>

#include "gma/checkpoint.hpp"
#include "gma/config.hpp"
#include "gma/model.hpp"
#include "gma/synthetic.hpp"
#include "gma/train.hpp"

using gma::RunConfig;
using gma::Tensor;

namespace {

// Small-but-real configuration: fast enough to train for a few epochs in a
// unit test while exercising every module.
RunConfig tiny_config() {
  RunConfig cfg = RunConfig::desk_preset();
  cfg.k1 = 5;
  cfg.k2 = 4;
  cfg.d = 8;
  cfg.d_roi = 6;
  cfg.d_emb = 6;
  cfg.head_hidden = 8;
  cfg.n_answers = 4;
  cfg.n_stack = 2;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.train_examples = 24;
  cfg.heldout_examples = 8;
  return cfg;
}

std::vector<double> flatten_params(gma::GmaModel<double>& model) {
  std::vector<double> out;
  for (auto& [name, t] : model.named_params())
    out.insert(out.end(), t->data.begin(), t->data.end());
  return out;
}

}  // namespace

TEST_CASE("config parsing: overrides, presets and errors") {
  RunConfig def;
  CHECK(def.k1 == 100);
  CHECK(def.d == 2048);
  CHECK(def.lr == 5e-4);
  CHECK(def.effective_tau() == doctest::Approx(1.0 / std::sqrt(2048.0)));

  auto c = gma::parse_config(
      "# comment\n\nd = 32\ntau=0.5\nencoder=explicit_only\nsimilarity = "
      "literal\nlog=/tmp/x.log\n");
  CHECK(c.d == 32);
  CHECK(c.effective_tau() == 0.5);
  CHECK(c.encoder == gma::EncoderMode::kExplicitOnly);
  CHECK(c.similarity == gma::SimilarityMode::kLiteral);
  CHECK(c.log_path == "/tmp/x.log");

  auto p = gma::parse_config("preset=desk\nd=24\n");
  CHECK(p.k1 == 6);
  CHECK(p.d == 24);  // later keys override the preset

  CHECK_THROWS_WITH_AS(gma::parse_config("d=8\nnot a pair\n"),
                       doctest::Contains("line 2"), std::runtime_error);
  CHECK_THROWS_WITH_AS(gma::parse_config("bogus_key=1\n"),
                       doctest::Contains("bogus_key"), std::runtime_error);
  CHECK_THROWS_AS(gma::parse_config("encoder=both\n"), std::runtime_error);

  RunConfig odd = tiny_config();
  odd.d = 7;
  CHECK_THROWS_WITH_AS(odd.validate(), doctest::Contains("even"),
                       std::invalid_argument);
  RunConfig neg = tiny_config();
  neg.k1 = 0;
  CHECK_THROWS_AS(neg.validate(), std::invalid_argument);

  // serialization round-trips through the parser
  RunConfig t = tiny_config();
  t.tau = 0.12345678901234567;
  auto back = gma::parse_config(gma::config_to_string(t));
  CHECK(back.d == t.d);
  CHECK(back.tau == t.tau);
  CHECK(back.seed == t.seed);
  CHECK(back.synth_target_bias == t.synth_target_bias);
}

TEST_CASE("GMA_SEED environment variable overrides the configured seed") {
  setenv("GMA_SEED", "777", 1);
  auto c = gma::parse_config("seed=5\n");
  unsetenv("GMA_SEED");
  CHECK(c.seed == 777);
  auto c2 = gma::parse_config("seed=5\n");
  CHECK(c2.seed == 5);
}

TEST_CASE("learning-rate schedule anchors") {
  gma::LrSchedule s;  // paper anchors
  CHECK(gma::lr_at_epoch(0, s) == 5e-4);
  CHECK(gma::lr_at_epoch(3, s) == 5e-4);
  CHECK(gma::lr_at_epoch(4, s) == 2e-3);
  CHECK(gma::lr_at_epoch(25, s) == 2e-3);
  CHECK(gma::lr_at_epoch(26, s) == 1e-3);
  CHECK(gma::lr_at_epoch(27, s) == 1e-3);
  CHECK(gma::lr_at_epoch(28, s) == 5e-4);
  CHECK(gma::lr_at_epoch(29, s) == 5e-4);
  CHECK(gma::lr_at_epoch(30, s) == 2.5e-4);
  CHECK_THROWS_AS(gma::lr_at_epoch(-1, s), std::invalid_argument);

  RunConfig cfg;
  cfg.lr = 1e-3;
  auto sc = gma::schedule_from_config(cfg);
  CHECK(sc.init == 1e-3);
  CHECK(sc.warm == 4e-3);
}

TEST_CASE("synthetic generator determinism and structure") {
  RunConfig cfg = tiny_config();
  gma::SyntheticGenerator<double> a(cfg, 42), b(cfg, 42), c(cfg, 43);
  auto ea = a.next(), eb = b.next(), ec = c.next();
  CHECK(gma::example_to_json(ea) == gma::example_to_json(eb));
  CHECK(gma::example_to_json(ea) != gma::example_to_json(ec));

  // structural sanity over many draws
  gma::SyntheticGenerator<double> g(cfg, 7);
  for (int i = 0; i < 50; ++i) {
    auto ex = g.next();
    CHECK(ex.answer >= 0);
    CHECK(ex.answer < cfg.n_answers);
    CHECK(ex.input.question.n_tokens ==
          static_cast<int>(ex.input.tokens.size()));
    CHECK(ex.input.visual_nodes.rows == cfg.k1);
    CHECK(ex.input.visual_nodes.cols == cfg.d_roi + 4);
    for (int ref : ex.token_refs) {
      CHECK(ref >= 0);
      CHECK(ref < cfg.k1);
      CHECK(ex.input.visual_mask[ref] == 1);
    }
  }
}

TEST_CASE("noise-free tokens decode their referenced node exactly") {
  RunConfig cfg = tiny_config();
  cfg.synth_noise = 0.0;
  gma::SyntheticGenerator<double> g(cfg, 11);
  int d_code = g.code_dim();
  int checked = 0;
  for (int rep = 0; rep < 20; ++rep) {
    auto ex = g.next();
    for (size_t t = 0; t < ex.input.tokens.size(); ++t) {
      // nearest visual node by code distance must be the planted reference
      int best = -1;
      double best_d = 0;
      for (int i = 0; i < cfg.k1; ++i) {
        if (!ex.input.visual_mask[i]) continue;
        double dist = 0;
        for (int j = 0; j < d_code; ++j) {
          double diff =
              ex.input.tokens[t].at(0, j) - ex.input.visual_nodes.at(i, j);
          dist += diff * diff;
        }
        if (best < 0 || dist < best_d) {
          best = i;
          best_d = dist;
        }
      }
      CHECK(best == ex.token_refs[t]);
      ++checked;
    }
  }
  CHECK(checked > 20);
}

TEST_CASE("synthetic answers are close to uniformly distributed") {
  RunConfig cfg = tiny_config();
  gma::SyntheticGenerator<double> g(cfg, 13);
  std::map<int, int> counts;
  int n = 2000;
  for (int i = 0; i < n; ++i) ++counts[g.next().answer];
  for (int a = 0; a < cfg.n_answers; ++a) {
    double frac = static_cast<double>(counts[a]) / n;
    CHECK(frac == doctest::Approx(1.0 / cfg.n_answers).epsilon(0.25));
  }
}

TEST_CASE("dataset JSON round trip") {
  RunConfig cfg = tiny_config();
  gma::SyntheticGenerator<double> g(cfg, 17);
  auto set = g.generate(3);
  auto j = gma::dataset_to_json(set);
  auto back = gma::dataset_from_json<double>(j);
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back[i].answer == set[i].answer);
    CHECK(back[i].input.visual_nodes.data == set[i].input.visual_nodes.data);
    CHECK(back[i].input.question.groups == set[i].input.question.groups);
    CHECK(back[i].token_refs == set[i].token_refs);
  }
}

TEST_CASE("checkpoint file round trip is bit exact") {
  RunConfig cfg = tiny_config();
  gma::GmaModel<double> model(cfg);
  gma::Trainer<double> trainer(model);
  gma::SyntheticGenerator<double> g(cfg, 19);
  auto train_set = g.generate(8);
  trainer.run_epoch(train_set);  // non-trivial optimizer state

  auto ck = trainer.snapshot();
  std::string path = "/tmp/gma_test_ck.bin";
  gma::save_checkpoint(ck, path);
  auto loaded = gma::load_checkpoint(path);
  CHECK(loaded.epoch == ck.epoch);
  CHECK(loaded.opt_step == ck.opt_step);
  CHECK(loaded.rng_state == ck.rng_state);
  CHECK(loaded.config_text == ck.config_text);
  REQUIRE(loaded.names == ck.names);
  for (const auto& name : ck.names)
    CHECK(loaded.get(name).data == ck.get(name).data);  // bit exact
  std::remove(path.c_str());
}

TEST_CASE("checkpoint error paths") {
  std::string path = "/tmp/gma_test_ck_bad.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out << "GMA1";  // header only
  }
  CHECK_THROWS_WITH_AS(gma::load_checkpoint(path),
                       doctest::Contains("truncated"), std::runtime_error);
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE.....";
  }
  CHECK_THROWS_WITH_AS(gma::load_checkpoint(path),
                       doctest::Contains("magic"), std::runtime_error);
  std::remove(path.c_str());
  CHECK_THROWS_AS(gma::load_checkpoint("/tmp/gma_no_such_file.bin"),
                  std::runtime_error);

  // restoring into a differently-shaped model names the offending parameter
  RunConfig cfg = tiny_config();
  gma::GmaModel<double> model(cfg);
  gma::Trainer<double> trainer(model);
  auto ck = trainer.snapshot();
  RunConfig wide = cfg;
  wide.d = 16;
  gma::GmaModel<double> other(wide);
  gma::Trainer<double> other_trainer(other);
  CHECK_THROWS_WITH_AS(other_trainer.restore(ck),
                       doctest::Contains("shape mismatch"),
                       std::runtime_error);
}

TEST_CASE("training: loss decreases and logs are deterministic") {
  RunConfig cfg = tiny_config();
  cfg.epochs = 3;
  gma::SyntheticGenerator<double> g(cfg, 23);
  auto train_set = g.generate(cfg.train_examples);
  auto heldout = g.generate(cfg.heldout_examples);

  auto run = [&] {
    gma::GmaModel<double> model(cfg);
    gma::Trainer<double> trainer(model);
    std::ostringstream log;
    auto metrics = trainer.train(train_set, heldout, &log);
    return std::make_pair(metrics, log.str());
  };
  auto [m1, log1] = run();
  auto [m2, log2] = run();
  CHECK(log1 == log2);  // byte-identical logs for identical runs
  REQUIRE(m1.size() == 3);
  CHECK(m1.back().mean_loss < m1.front().mean_loss);

  // every log line parses as JSON
  std::istringstream in(log1);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    CHECK_NOTHROW(nlohmann::json::parse(line));
    ++lines;
  }
  CHECK(lines == 4);  // header + one line per epoch

  // a different seed changes the trajectory
  RunConfig cfg2 = cfg;
  cfg2.seed = cfg.seed + 1;
  gma::GmaModel<double> model2(cfg2);
  gma::Trainer<double> trainer2(model2);
  std::ostringstream log3;
  trainer2.train(train_set, heldout, &log3);
  CHECK(log3.str() != log1);
}

TEST_CASE("resume from checkpoint replays the straight-through run exactly") {
  RunConfig cfg = tiny_config();
  cfg.epochs = 4;
  gma::SyntheticGenerator<double> g(cfg, 29);
  auto train_set = g.generate(cfg.train_examples);
  auto heldout = g.generate(cfg.heldout_examples);

  // straight-through run
  gma::GmaModel<double> model_a(cfg);
  gma::Trainer<double> trainer_a(model_a);
  trainer_a.train(train_set, heldout, nullptr);

  // run 2 epochs, snapshot through a file, resume in a fresh model
  RunConfig half = cfg;
  half.epochs = 2;
  gma::GmaModel<double> model_b(half);
  gma::Trainer<double> trainer_b(model_b);
  trainer_b.train(train_set, heldout, nullptr);
  std::string path = "/tmp/gma_test_resume.bin";
  gma::save_checkpoint(trainer_b.snapshot(), path);

  gma::GmaModel<double> model_c(cfg);
  gma::Trainer<double> trainer_c(model_c);
  trainer_c.restore(gma::load_checkpoint(path));
  CHECK(trainer_c.epoch() == 2);
  trainer_c.train(train_set, heldout, nullptr);
  std::remove(path.c_str());

  auto pa = flatten_params(model_a);
  auto pc = flatten_params(model_c);
  REQUIRE(pa.size() == pc.size());
  double max_diff = 0;
  for (size_t i = 0; i < pa.size(); ++i)
    max_diff = std::max(max_diff, std::fabs(pa[i] - pc[i]));
  CHECK(max_diff < 1e-10);
}

TEST_CASE("evaluate rejects empty datasets") {
  RunConfig cfg = tiny_config();
  gma::GmaModel<double> model(cfg);
  std::vector<gma::SyntheticExample<double>> empty;
  CHECK_THROWS_AS(gma::evaluate(model, empty), std::invalid_argument);
}
