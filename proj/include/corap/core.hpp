#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace corap {

// One supervised instance: query plus reference reasoning steps and answer.
// image_ref is an opaque handle (path or URI); nothing in this library ever
// dereferences it, backends receive it verbatim.
struct Example {
  std::string id;
  std::optional<std::string> image_ref;
  std::string query;
  std::vector<std::string> reference_steps;
  std::string reference_answer;

  bool operator==(const Example&) const = default;
};

enum class DatasetRole { training, calibration, test };

std::string to_string(DatasetRole role);
DatasetRole dataset_role_from_string(std::string_view s);

struct Dataset {
  std::vector<Example> examples;
  DatasetRole role = DatasetRole::training;

  bool operator==(const Dataset&) const = default;
  const Example* find(std::string_view id) const;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Reads line-delimited JSON records {id, query, reasoning_steps, answer,
// image_ref?}. Input order is preserved; duplicate ids are rejected with
// both offending line numbers. Unknown fields are ignored and reported
// through `warnings` when given.
Dataset load_dataset(std::istream& in, DatasetRole role,
                     std::vector<std::string>* warnings = nullptr);
Dataset load_dataset_file(const std::string& path, DatasetRole role,
                          std::vector<std::string>* warnings = nullptr);

// Inverse of load_dataset: one JSON record per line, reparses to an equal
// Dataset.
std::string serialize_dataset(const Dataset& ds);

// 64-bit mix (splitmix64 finalizer). Used for seed derivation and hashing.
std::uint64_t mix64(std::uint64_t z);
std::uint64_t fnv1a64(std::string_view bytes);

// Deterministic pseudo-random stream (splitmix64 sequence).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double next_double();
  double uniform(double lo, double hi);
  bool bernoulli(double p);
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t next_below(std::uint64_t n);

 private:
  std::uint64_t state_;
};

// Hierarchical seed derivation: the same root seed and (label, index) path
// always yields the same stream, and distinct paths yield independent
// streams. Derivation is pure, so parallel and sequential pipeline
// executions see identical randomness.
class SeedTree {
 public:
  explicit SeedTree(std::uint64_t root_seed);

  SeedTree child(std::string_view label, std::uint64_t index) const;
  Rng stream() const { return Rng(node_); }

  std::uint64_t root_seed() const { return root_; }
  std::uint64_t node_seed() const { return node_; }
  const std::vector<std::pair<std::string, std::uint64_t>>& path() const {
    return path_;
  }

 private:
  std::uint64_t root_;
  std::uint64_t node_;
  std::vector<std::pair<std::string, std::uint64_t>> path_;
};

}  // namespace corap
