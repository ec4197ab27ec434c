// Named parameter storage with Adam state and a versioned binary
// checkpoint container (name, shape, raw little-endian float64 values).

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ifr/tensor.hpp"

namespace ifr {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class ParamStore {
 public:
  struct Entry {
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;
  };

  explicit ParamStore(AdamConfig cfg = {}) : adam_(cfg) {}

  Tensor& create(const std::string& name, std::vector<std::size_t> shape) {
    if (entries_.count(name)) throw std::invalid_argument("param '" + name + "' already exists");
    Entry e;
    e.value = Tensor::zeros(shape);
    e.grad = Tensor::zeros(shape);
    e.m = Tensor::zeros(shape);
    e.v = Tensor::zeros(std::move(shape));
    return entries_.emplace(name, std::move(e)).first->second.value;
  }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }

  Tensor& value(const std::string& name) { return entry(name).value; }
  const Tensor& value(const std::string& name) const { return entry(name).value; }
  Tensor& grad(const std::string& name) { return entry(name).grad; }

  // Trace the parameter on a tape; backward accumulates into its grad.
  Var use(Tape& tape, const std::string& name) {
    Entry& e = entry(name);
    return tape.bound_leaf(e.value, &e.grad);
  }

  void zero_grad() {
    for (auto& [name, e] : entries_)
      std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
  }

  // One Adam update over all parameters. Rejects non-finite gradients
  // before touching any state so a poisoned step cannot corrupt weights.
  void adam_step() {
    for (const auto& [name, e] : entries_)
      if (!e.grad.all_finite())
        throw std::runtime_error("adam_step: non-finite gradient in parameter '" + name + "'");
    ++step_;
    const double bc1 = 1.0 - std::pow(adam_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(adam_.beta2, static_cast<double>(step_));
    for (auto& [name, e] : entries_) {
      for (std::size_t i = 0; i < e.value.size(); ++i) {
        const double g = e.grad.data[i];
        e.m.data[i] = adam_.beta1 * e.m.data[i] + (1.0 - adam_.beta1) * g;
        e.v.data[i] = adam_.beta2 * e.v.data[i] + (1.0 - adam_.beta2) * g * g;
        const double mhat = e.m.data[i] / bc1;
        const double vhat = e.v.data[i] / bc2;
        e.value.data[i] -= adam_.lr * mhat / (std::sqrt(vhat) + adam_.eps);
      }
    }
  }

  std::int64_t step() const { return step_; }
  AdamConfig& adam() { return adam_; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [name, e] : entries_) out.push_back(name);
    return out;
  }

  std::size_t total_params() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) n += e.value.size();
    return n;
  }

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

  bool operator==(const ParamStore& o) const {
    if (step_ != o.step_ || entries_.size() != o.entries_.size()) return false;
    for (const auto& [name, e] : entries_) {
      auto it = o.entries_.find(name);
      if (it == o.entries_.end()) return false;
      if (e.value.data != it->second.value.data || e.m.data != it->second.m.data ||
          e.v.data != it->second.v.data)
        return false;
    }
    return true;
  }

 private:
  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("unknown parameter '" + name + "'");
    return it->second;
  }
  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("unknown parameter '" + name + "'");
    return it->second;
  }

  std::map<std::string, Entry> entries_;  // ordered: deterministic iteration
  std::int64_t step_ = 0;
  AdamConfig adam_;
};

// ---------------------------------------------------------------------------
// Named-tensor container
//
// Layout (all integers little-endian):
//   magic   8 bytes  "IFRTENS\0"
//   version u32      (currently 1)
//   count   u64
//   count entries of: name_len u32, name bytes, ndim u32, dims u64[ndim],
//                     values f64[product(dims)]
// ---------------------------------------------------------------------------

namespace container {

inline constexpr char kMagic[8] = {'I', 'F', 'R', 'T', 'E', 'N', 'S', '\0'};
inline constexpr std::uint32_t kVersion = 1;

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}
inline void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}
inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("container: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}
inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("container: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}
inline double get_f64(std::istream& is) {
  std::uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}
}  // namespace detail

inline void write(const std::filesystem::path& path, const std::map<std::string, Tensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("container: cannot open '" + path.string() + "' for writing");
  os.write(kMagic, 8);
  detail::put_u32(os, kVersion);
  detail::put_u64(os, tensors.size());
  for (const auto& [name, t] : tensors) {
    detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(t.ndim()));
    for (std::size_t d : t.shape) detail::put_u64(os, d);
    for (double v : t.data) detail::put_f64(os, v);
  }
  if (!os) throw std::runtime_error("container: write failed for '" + path.string() + "'");
}

inline std::map<std::string, Tensor> read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("container: cannot open '" + path.string() + "'");
  char magic[8];
  if (!is.read(magic, 8)) throw std::runtime_error("container: truncated file");
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("container: bad magic in '" + path.string() + "'");
  const std::uint32_t version = detail::get_u32(is);
  if (version != kVersion)
    throw std::runtime_error("container: unsupported version " + std::to_string(version));
  const std::uint64_t count = detail::get_u64(is);
  std::map<std::string, Tensor> out;
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint32_t name_len = detail::get_u32(is);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw std::runtime_error("container: truncated file");
    const std::uint32_t ndim = detail::get_u32(is);
    std::vector<std::size_t> shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) shape[d] = detail::get_u64(is);
    Tensor t(shape);
    for (double& v : t.data) v = detail::get_f64(is);
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace container

inline void ParamStore::save(const std::filesystem::path& path) const {
  std::map<std::string, Tensor> tensors;
  for (const auto& [name, e] : entries_) {
    tensors.emplace(name, e.value);
    tensors.emplace("adam.m:" + name, e.m);
    tensors.emplace("adam.v:" + name, e.v);
  }
  tensors.emplace("adam.step", Tensor::scalar(static_cast<double>(step_)));
  container::write(path, tensors);
}

inline void ParamStore::load(const std::filesystem::path& path) {
  auto tensors = container::read(path);
  entries_.clear();
  step_ = 0;
  auto it = tensors.find("adam.step");
  if (it != tensors.end()) {
    step_ = static_cast<std::int64_t>(it->second.data.at(0));
    tensors.erase(it);
  }
  for (auto& [name, t] : tensors) {
    if (name.rfind("adam.m:", 0) == 0 || name.rfind("adam.v:", 0) == 0) continue;
    Entry e;
    e.grad = Tensor::zeros(t.shape);
    e.m = Tensor::zeros(t.shape);
    e.v = Tensor::zeros(t.shape);
    e.value = std::move(t);
    entries_.emplace(name, std::move(e));
  }
  for (auto& [name, t] : tensors) {
    if (name.rfind("adam.m:", 0) == 0) {
      auto eit = entries_.find(name.substr(7));
      if (eit == entries_.end()) throw std::runtime_error("container: orphan moment tensor '" + name + "'");
      eit->second.m = std::move(t);
    } else if (name.rfind("adam.v:", 0) == 0) {
      auto eit = entries_.find(name.substr(7));
      if (eit == entries_.end()) throw std::runtime_error("container: orphan moment tensor '" + name + "'");
      eit->second.v = std::move(t);
    }
  }
}

}  // namespace ifr
