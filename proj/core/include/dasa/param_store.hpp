#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "dasa/tensor.hpp"

namespace dasa {

enum class InitKind { zeros, ones, xavier_uniform, normal };

// Ordered, named collection of trainable tensors. Iteration follows
// registration order. Each parameter draws its initial values from a stream
// seeded by (init_seed, name), so adding a parameter never perturbs others.
class ParamStore {
 public:
  static constexpr std::uint8_t kFormatVersion = 1;

  explicit ParamStore(std::uint64_t init_seed = 0) : init_seed_(init_seed) {}

  std::uint64_t init_seed() const { return init_seed_; }

  // Registers and initialises a parameter. `stddev` is used by InitKind::normal.
  Tensor& add(const std::string& name, Shape shape, InitKind init, double stddev = 0.02);
  // Inserts an existing tensor (values are copied).
  Tensor& insert(const std::string& name, const Tensor& value);

  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }

  void zero_grad();
  // Deep copy; the clone shares no storage with *this.
  ParamStore clone() const;
  // Copies values of every parameter whose name starts with prefix.
  void copy_values_from(const ParamStore& other, const std::string& prefix);

  // Free-form text stored alongside the tensors (model config JSON).
  const std::string& metadata() const { return metadata_; }
  void set_metadata(std::string metadata) { metadata_ = std::move(metadata); }

  void save(const std::filesystem::path& path) const;
  static ParamStore load(const std::filesystem::path& path);

  bool bitwise_equal(const ParamStore& other) const;

 private:
  std::uint64_t init_seed_;
  std::string metadata_;
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace dasa
