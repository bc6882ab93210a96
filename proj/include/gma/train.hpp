#ifndef GMA_TRAIN_HPP
#define GMA_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gma/adamax.hpp"
#include "gma/checkpoint.hpp"
#include "gma/config.hpp"
#include "gma/model.hpp"
#include "gma/synthetic.hpp"
#include "gma/tape.hpp"

namespace gma {

/// Piecewise-constant schedule: base rate until warm_epoch, then the warm
/// rate, halved every decay_every epochs once past decay_after.
struct LrSchedule {
  double init = 5e-4;
  double warm = 2e-3;
  int warm_epoch = 4;
  int decay_after = 25;  // last epoch at the warm rate
  int decay_every = 2;
};

inline double lr_at_epoch(int epoch, const LrSchedule& s) {
  if (epoch < 0) throw std::invalid_argument("lr_at_epoch: negative epoch");
  if (epoch < s.warm_epoch) return s.init;
  if (epoch <= s.decay_after) return s.warm;
  int halvings = (epoch - s.decay_after - 1) / s.decay_every + 1;
  return s.warm * std::pow(0.5, halvings);
}

inline LrSchedule schedule_from_config(const RunConfig& cfg) {
  LrSchedule s;
  s.init = cfg.lr;
  s.warm = cfg.lr * 4.0;  // paper anchors: 5e-4 base, 2e-3 after warm-up
  return s;
}

struct EpochMetrics {
  int epoch = 0;
  double lr = 0;
  double mean_loss = 0;
  double train_accuracy = 0;
  double heldout_accuracy = 0;
};

struct EvalMetrics {
  double accuracy = 0;   // argmax == target
  double mean_loss = 0;
  int count = 0;
};

template <class R>
EvalMetrics evaluate(GmaModel<R>& model,
                     const std::vector<SyntheticExample<R>>& set) {
  if (set.empty()) throw std::invalid_argument("evaluate: empty dataset");
  EvalMetrics m;
  for (const auto& ex : set) {
    Tape<R> tape;
    Tensor<R> target =
        one_hot_target<R>(ex.answer, model.config().n_answers);
    ForwardOptions<R> opt;
    auto result = model.forward(tape, ex.input, &target, opt);
    m.mean_loss += static_cast<double>(tape.val(result.loss).at(0, 0));
    if (result.prediction.answer == ex.answer) m.accuracy += 1.0;
  }
  m.count = static_cast<int>(set.size());
  m.accuracy /= m.count;
  m.mean_loss /= m.count;
  return m;
}

/// Mini-batch training loop with Adamax, the paper's learning-rate schedule
/// and per-epoch checkpointing. Deterministic for a fixed config and seed;
/// the checkpoint captures the RNG stream so resumed runs replay exactly.
template <class R = double>
class Trainer {
 public:
  explicit Trainer(GmaModel<R>& model)
      : model_(model),
        cfg_(model.config()),
        schedule_(schedule_from_config(cfg_)),
        opt_(static_cast<R>(cfg_.lr)),
        rng_(cfg_.seed ^ 0x9e3779b97f4a7c15ULL) {
    named_ = model_.named_params();
    for (auto& [name, t] : named_) opt_.add_slot(t->size());
  }

  int epoch() const { return epoch_; }

  Checkpoint snapshot() const {
    Checkpoint ck;
    ck.epoch = static_cast<uint32_t>(epoch_);
    ck.opt_step = static_cast<uint64_t>(opt_.t);
    std::ostringstream rs;
    rs << rng_;
    ck.rng_state = rs.str();
    ck.config_text = config_to_string(cfg_);
    for (size_t i = 0; i < named_.size(); ++i) {
      ck.put(named_[i].first, to_double(*named_[i].second));
      ck.put(named_[i].first + "#m",
             slot_tensor(opt_.slots[i].m, *named_[i].second));
      ck.put(named_[i].first + "#u",
             slot_tensor(opt_.slots[i].u, *named_[i].second));
    }
    return ck;
  }

  void restore(const Checkpoint& ck) {
    for (size_t i = 0; i < named_.size(); ++i) {
      const std::string& name = named_[i].first;
      Tensor<R>& dst = *named_[i].second;
      const Tensor<double>& src = ck.get(name);
      if (src.rows != dst.rows || src.cols != dst.cols)
        throw std::runtime_error(
            "checkpoint: shape mismatch for '" + name + "': file has " +
            shape_str(src.rows, src.cols) + ", config needs " +
            shape_str(dst.rows, dst.cols));
      copy_values(src, dst);
      copy_slot(ck.get(name + "#m"), opt_.slots[i].m);
      copy_slot(ck.get(name + "#u"), opt_.slots[i].u);
    }
    epoch_ = static_cast<int>(ck.epoch);
    opt_.t = static_cast<int64_t>(ck.opt_step);
    std::istringstream rs(ck.rng_state);
    rs >> rng_;
  }

  /// One pass over the training set. Returns the epoch's metrics (heldout
  /// accuracy filled in by train()).
  EpochMetrics run_epoch(const std::vector<SyntheticExample<R>>& train_set) {
    EpochMetrics m;
    m.epoch = epoch_;
    m.lr = cfg_.lr_fixed > 0.0 ? cfg_.lr_fixed
                               : lr_at_epoch(epoch_, schedule_);
    opt_.lr = static_cast<R>(m.lr);

    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);

    std::vector<std::vector<R>> grad_acc(named_.size());
    for (size_t i = 0; i < named_.size(); ++i)
      grad_acc[i].assign(named_[i].second->size(), R(0));

    double total_loss = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg_.batch_size)) {
      size_t end =
          std::min(order.size(), start + static_cast<size_t>(cfg_.batch_size));
      for (auto& g : grad_acc) std::fill(g.begin(), g.end(), R(0));
      R inv_batch = R(1) / static_cast<R>(end - start);
      for (size_t k = start; k < end; ++k) {
        const SyntheticExample<R>& ex = train_set[order[k]];
        Tape<R> tape;
        Tensor<R> target = one_hot_target<R>(ex.answer, cfg_.n_answers);
        ForwardOptions<R> fopt;
        fopt.training = true;
        fopt.rng = &rng_;
        ForwardResult<R> result;
        try {
          result = model_.forward(tape, ex.input, &target, fopt);
          tape.backward(result.loss);
        } catch (const std::runtime_error& e) {
          throw training_diagnostic(e, order, start, end, order[k]);
        }
        total_loss += static_cast<double>(tape.val(result.loss).at(0, 0));
        for (size_t i = 0; i < named_.size(); ++i) {
          Tensor<R> g = tape.grad(result.param_vars[i]);
          for (size_t j = 0; j < g.size(); ++j)
            grad_acc[i][j] += g.data[j] * inv_batch;
        }
      }
      std::vector<Tensor<R>*> params;
      std::vector<const std::vector<R>*> grads;
      for (size_t i = 0; i < named_.size(); ++i) {
        params.push_back(named_[i].second);
        grads.push_back(&grad_acc[i]);
      }
      adamax_step(params, grads, opt_);
    }
    m.mean_loss = total_loss / static_cast<double>(train_set.size());
    ++epoch_;
    return m;
  }

  /// Full loop: epochs from the current position to cfg.epochs, metrics log
  /// as line-delimited JSON (header line first), checkpoint at each epoch
  /// end when a path is configured.
  std::vector<EpochMetrics> train(
      const std::vector<SyntheticExample<R>>& train_set,
      const std::vector<SyntheticExample<R>>& heldout_set,
      std::ostream* log = nullptr) {
    if (log && epoch_ == 0) *log << log_header() << "\n";
    std::vector<EpochMetrics> all;
    while (epoch_ < cfg_.epochs) {
      EpochMetrics m = run_epoch(train_set);
      m.train_accuracy = evaluate(model_, train_set).accuracy;
      if (!heldout_set.empty())
        m.heldout_accuracy = evaluate(model_, heldout_set).accuracy;
      if (log) *log << metrics_line(m) << "\n";
      if (!cfg_.checkpoint_path.empty())
        save_checkpoint(snapshot(), cfg_.checkpoint_path);
      all.push_back(m);
    }
    return all;
  }

  std::string log_header() const {
    nlohmann::json h;
    h["run"] = "gma-train";
    h["config"] = config_to_string(cfg_);
    h["lr_schedule"] =
        "constant " + std::to_string(schedule_.init) + " before epoch " +
        std::to_string(schedule_.warm_epoch) + ", then jump to " +
        std::to_string(schedule_.warm) + ", halved every " +
        std::to_string(schedule_.decay_every) + " epochs after epoch " +
        std::to_string(schedule_.decay_after);
    return h.dump();
  }

  static std::string metrics_line(const EpochMetrics& m) {
    nlohmann::json j;
    j["epoch"] = m.epoch;
    j["lr"] = m.lr;
    j["mean_loss"] = m.mean_loss;
    j["train_acc"] = m.train_accuracy;
    j["heldout_acc"] = m.heldout_accuracy;
    return j.dump();
  }

 private:
  GmaModel<R>& model_;
  RunConfig cfg_;
  LrSchedule schedule_;
  AdamaxState<R> opt_;
  std::mt19937_64 rng_;
  std::vector<std::pair<std::string, Tensor<R>*>> named_;
  int epoch_ = 0;

  static Tensor<double> to_double(const Tensor<R>& t) {
    Tensor<double> out(t.rows, t.cols);
    for (size_t i = 0; i < t.size(); ++i)
      out.data[i] = static_cast<double>(t.data[i]);
    return out;
  }
  static Tensor<double> slot_tensor(const std::vector<R>& v,
                                    const Tensor<R>& like) {
    Tensor<double> out(like.rows, like.cols);
    for (size_t i = 0; i < v.size(); ++i)
      out.data[i] = static_cast<double>(v[i]);
    return out;
  }
  static void copy_values(const Tensor<double>& src, Tensor<R>& dst) {
    for (size_t i = 0; i < src.size(); ++i)
      dst.data[i] = static_cast<R>(src.data[i]);
  }
  static void copy_slot(const Tensor<double>& src, std::vector<R>& dst) {
    if (src.size() != dst.size())
      throw std::runtime_error("checkpoint: optimizer slot size mismatch");
    for (size_t i = 0; i < src.size(); ++i)
      dst[i] = static_cast<R>(src.data[i]);
  }

  std::runtime_error training_diagnostic(const std::runtime_error& cause,
                                         const std::vector<int>& order,
                                         size_t start, size_t end,
                                         int example) const {
    nlohmann::json diag;
    diag["error"] = cause.what();
    diag["epoch"] = epoch_;
    diag["example"] = example;
    diag["batch"] = std::vector<int>(order.begin() + start,
                                     order.begin() + end);
    std::string msg = "training aborted: " + std::string(cause.what());
    if (!cfg_.log_path.empty()) {
      std::ofstream dump(cfg_.log_path + ".diag.json");
      dump << diag.dump(2) << "\n";
      msg += " (diagnostic batch dump: " + cfg_.log_path + ".diag.json)";
    } else {
      msg += " diagnostic: " + diag.dump();
    }
    return std::runtime_error(msg);
  }
};

}  // namespace gma

#endif  // GMA_TRAIN_HPP
