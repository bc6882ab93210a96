#ifndef GMA_CHECKPOINT_HPP
#define GMA_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "gma/tensor.hpp"

namespace gma {

/// Versioned binary training snapshot.
///
/// Layout (little endian):
///   magic "GMA1" | u32 version | u32 epoch | u64 optimizer step t
///   | u32 len + rng state string | u32 len + config text
///   | u32 entry count | per entry: u32 len + name, u32 rows, u32 cols,
///     u8 dtype (8 = f64, 4 = f32)
///   | raw values, entry order
///
/// Optimizer buffers ride along as entries named "<param>#m" / "<param>#u".
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  uint32_t epoch = 0;
  uint64_t opt_step = 0;
  std::string rng_state;
  std::string config_text;
  // ordered name -> (rows, cols, doubles)
  std::vector<std::string> names;
  std::map<std::string, Tensor<double>> tensors;

  void put(const std::string& name, const Tensor<double>& t) {
    if (!tensors.count(name)) names.push_back(name);
    tensors[name] = t;
  }

  const Tensor<double>& get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw std::runtime_error("checkpoint: missing entry '" + name + "'");
    return it->second;
  }
};

namespace detail {

template <class T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
  uint32_t n = read_pod<uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write("GMA1", 4);
  detail::write_pod<uint32_t>(out, Checkpoint::kVersion);
  detail::write_pod<uint32_t>(out, ck.epoch);
  detail::write_pod<uint64_t>(out, ck.opt_step);
  detail::write_string(out, ck.rng_state);
  detail::write_string(out, ck.config_text);
  detail::write_pod<uint32_t>(out, static_cast<uint32_t>(ck.names.size()));
  for (const std::string& name : ck.names) {
    const Tensor<double>& t = ck.tensors.at(name);
    detail::write_string(out, name);
    detail::write_pod<uint32_t>(out, static_cast<uint32_t>(t.rows));
    detail::write_pod<uint32_t>(out, static_cast<uint32_t>(t.cols));
    detail::write_pod<uint8_t>(out, 8);
  }
  for (const std::string& name : ck.names) {
    const Tensor<double>& t = ck.tensors.at(name);
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed on " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "GMA1", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  uint32_t version = detail::read_pod<uint32_t>(in);
  if (version != Checkpoint::kVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  Checkpoint ck;
  ck.epoch = detail::read_pod<uint32_t>(in);
  ck.opt_step = detail::read_pod<uint64_t>(in);
  ck.rng_state = detail::read_string(in);
  ck.config_text = detail::read_string(in);
  uint32_t count = detail::read_pod<uint32_t>(in);
  struct Meta { std::string name; uint32_t rows, cols; uint8_t dtype; };
  std::vector<Meta> metas;
  for (uint32_t i = 0; i < count; ++i) {
    Meta m;
    m.name = detail::read_string(in);
    m.rows = detail::read_pod<uint32_t>(in);
    m.cols = detail::read_pod<uint32_t>(in);
    m.dtype = detail::read_pod<uint8_t>(in);
    if (m.dtype != 8)
      throw std::runtime_error("checkpoint: unsupported dtype for '" +
                               m.name + "'");
    metas.push_back(std::move(m));
  }
  for (const Meta& m : metas) {
    Tensor<double> t(static_cast<int>(m.rows), static_cast<int>(m.cols));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    ck.put(m.name, std::move(t));
  }
  return ck;
}

}  // namespace gma

#endif  // GMA_CHECKPOINT_HPP
