#include "dasa/param_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "dasa/errors.hpp"

namespace dasa {

namespace {

constexpr char kMagic[8] = {'D', 'A', 'S', 'A', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& os, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host expected");
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T take(std::istream& is) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw IoError("checkpoint truncated");
  }
  return value;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string take_string(std::istream& is) {
  const auto n = take<std::uint64_t>(is);
  if (n > (1ULL << 32)) throw IoError("checkpoint string length implausible");
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), static_cast<std::streamsize>(n))) {
    throw IoError("checkpoint truncated");
  }
  return s;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Tensor& ParamStore::add(const std::string& name, Shape shape, InitKind init, double stddev) {
  if (contains(name)) throw ContractError("duplicate parameter name: " + name);
  const std::size_t n = shape_numel(shape);
  std::vector<double> values(n, 0.0);
  std::mt19937_64 rng(fnv1a64(name) ^ (init_seed_ * 0x9e3779b97f4a7c15ULL));
  switch (init) {
    case InitKind::zeros:
      break;
    case InitKind::ones:
      std::fill(values.begin(), values.end(), 1.0);
      break;
    case InitKind::xavier_uniform: {
      const double fan_in = shape.size() == 2 ? static_cast<double>(shape[0]) : 1.0;
      const double fan_out = static_cast<double>(shape.back());
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (double& v : values) v = dist(rng);
      break;
    }
    case InitKind::normal: {
      std::normal_distribution<double> dist(0.0, stddev);
      for (double& v : values) v = dist(rng);
      break;
    }
  }
  index_[name] = entries_.size();
  entries_.emplace_back(name, Tensor::from(std::move(shape), std::move(values), true));
  return entries_.back().second;
}

Tensor& ParamStore::insert(const std::string& name, const Tensor& value) {
  if (contains(name)) throw ContractError("duplicate parameter name: " + name);
  std::vector<double> values(value.data().begin(), value.data().end());
  index_[name] = entries_.size();
  entries_.emplace_back(name, Tensor::from(value.shape(), std::move(values), true));
  return entries_.back().second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return entries_[it->second].second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return entries_[it->second].second;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

ParamStore ParamStore::clone() const {
  ParamStore out(init_seed_);
  out.metadata_ = metadata_;
  for (const auto& [name, t] : entries_) out.insert(name, t);
  return out;
}

void ParamStore::copy_values_from(const ParamStore& other, const std::string& prefix) {
  for (auto& [name, t] : entries_) {
    if (name.rfind(prefix, 0) != 0) continue;
    const Tensor& src = other.get(name);
    if (src.shape() != t.shape()) {
      throw DimensionError("copy_values_from: shape mismatch for " + name);
    }
    std::copy(src.data().begin(), src.data().end(), t.mutable_data().begin());
  }
}

void ParamStore::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint8_t>(os, kFormatVersion);
  put<std::uint64_t>(os, init_seed_);
  put_string(os, metadata_);
  put<std::uint64_t>(os, entries_.size());
  for (const auto& [name, t] : entries_) {
    put_string(os, name);
    put<std::uint64_t>(os, t.rank());
    for (std::size_t e : t.shape()) put<std::uint64_t>(os, e);
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

ParamStore ParamStore::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  const auto version = take<std::uint8_t>(is);
  if (version != kFormatVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  ParamStore store(take<std::uint64_t>(is));
  store.metadata_ = take_string(is);
  const auto count = take<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = take_string(is);
    const auto rank = take<std::uint64_t>(is);
    if (rank > 8) throw IoError("checkpoint rank implausible for " + name);
    Shape shape(rank);
    for (auto& e : shape) e = take<std::uint64_t>(is);
    std::vector<double> values(shape_numel(shape));
    if (!is.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(double)))) {
      throw IoError("checkpoint truncated in " + name);
    }
    store.index_[name] = store.entries_.size();
    store.entries_.emplace_back(name, Tensor::from(std::move(shape), std::move(values), true));
  }
  return store;
}

bool ParamStore::bitwise_equal(const ParamStore& other) const {
  if (init_seed_ != other.init_seed_ || metadata_ != other.metadata_ ||
      entries_.size() != other.entries_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& [na, a] = entries_[i];
    const auto& [nb, b] = other.entries_[i];
    if (na != nb || a.shape() != b.shape()) return false;
    if (std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

}  // namespace dasa
