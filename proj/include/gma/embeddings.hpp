#ifndef GMA_EMBEDDINGS_HPP
#define GMA_EMBEDDINGS_HPP

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace gma {

enum class OovPolicy { kZero, kHashedRandom, kError };

/// Word -> fixed-dimension vector table in the GloVe text layout (one token
/// per line: word then whitespace-separated reals). Lookups for unknown
/// words follow the configured out-of-vocabulary policy; hashed-random draws
/// a reproducible vector keyed on the word and a fixed seed.
class EmbeddingTable {
 public:
  EmbeddingTable(int dim, OovPolicy policy, uint64_t seed = 0)
      : dim_(dim), policy_(policy), seed_(seed) {
    if (dim <= 0) throw std::invalid_argument("EmbeddingTable: dim <= 0");
  }

  int dim() const { return dim_; }
  size_t vocab_size() const { return table_.size(); }
  bool contains(const std::string& word) const { return table_.count(word); }

  void insert(const std::string& word, std::vector<double> vec) {
    if (static_cast<int>(vec.size()) != dim_)
      throw std::invalid_argument("EmbeddingTable: dimension mismatch");
    table_[word] = std::move(vec);
  }

  std::vector<double> lookup(const std::string& word) const {
    auto it = table_.find(word);
    if (it != table_.end()) return it->second;
    switch (policy_) {
      case OovPolicy::kZero:
        return std::vector<double>(dim_, 0.0);
      case OovPolicy::kHashedRandom: {
        std::mt19937_64 rng(seed_ ^ std::hash<std::string>{}(word));
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        std::vector<double> v(dim_);
        for (double& x : v) x = u(rng);
        return v;
      }
      case OovPolicy::kError:
        throw std::runtime_error("EmbeddingTable: out-of-vocabulary word '" +
                                 word + "'");
    }
    throw std::logic_error("EmbeddingTable: bad policy");
  }

  static EmbeddingTable load(const std::string& text, int dim,
                             OovPolicy policy, uint64_t seed = 0) {
    EmbeddingTable t(dim, policy, seed);
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string word;
      ls >> word;
      std::vector<double> vec;
      double x;
      while (ls >> x) vec.push_back(x);
      if (static_cast<int>(vec.size()) != dim)
        throw std::runtime_error(
            "embedding line " + std::to_string(lineno) + ": expected " +
            std::to_string(dim) + " values, got " +
            std::to_string(vec.size()));
      t.insert(word, std::move(vec));
    }
    return t;
  }

 private:
  int dim_;
  OovPolicy policy_;
  uint64_t seed_;
  std::unordered_map<std::string, std::vector<double>> table_;
};

}  // namespace gma

#endif  // GMA_EMBEDDINGS_HPP
