#include "corap/core.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace corap {

using nlohmann::json;

std::string to_string(DatasetRole role) {
  switch (role) {
    case DatasetRole::training:
      return "training";
    case DatasetRole::calibration:
      return "calibration";
    case DatasetRole::test:
      return "test";
  }
  return "unknown";
}

DatasetRole dataset_role_from_string(std::string_view s) {
  if (s == "training") return DatasetRole::training;
  if (s == "calibration") return DatasetRole::calibration;
  if (s == "test") return DatasetRole::test;
  throw std::invalid_argument("unknown dataset role: " + std::string(s));
}

const Example* Dataset::find(std::string_view id) const {
  for (const auto& ex : examples) {
    if (ex.id == id) return &ex;
  }
  return nullptr;
}

namespace {

const char* kRequiredFields[] = {"id", "query", "reasoning_steps", "answer"};
const char* kKnownFields[] = {"id", "query", "reasoning_steps", "answer",
                              "image_ref"};

bool is_known_field(const std::string& key) {
  for (const char* k : kKnownFields) {
    if (key == k) return true;
  }
  return false;
}

}  // namespace

Dataset load_dataset(std::istream& in, DatasetRole role,
                     std::vector<std::string>* warnings) {
  Dataset ds;
  ds.role = role;
  std::map<std::string, int> first_line_of_id;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": malformed record: " + e.what());
    }
    if (!rec.is_object()) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": record is not an object");
    }
    for (const char* field : kRequiredFields) {
      if (!rec.contains(field)) {
        throw ParseError("line " + std::to_string(line_no) +
                         ": missing required field \"" + field + "\"");
      }
    }
    Example ex;
    try {
      ex.id = rec.at("id").get<std::string>();
      ex.query = rec.at("query").get<std::string>();
      ex.reference_answer = rec.at("answer").get<std::string>();
      ex.reference_steps =
          rec.at("reasoning_steps").get<std::vector<std::string>>();
      if (rec.contains("image_ref") && !rec.at("image_ref").is_null()) {
        ex.image_ref = rec.at("image_ref").get<std::string>();
      }
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": bad field type: " + e.what());
    }
    for (const auto& step : ex.reference_steps) {
      if (step.empty()) {
        throw ParseError("line " + std::to_string(line_no) +
                         ": empty entry in \"reasoning_steps\"");
      }
    }
    auto [it, inserted] = first_line_of_id.emplace(ex.id, line_no);
    if (!inserted) {
      throw ParseError("duplicate id \"" + ex.id + "\" on lines " +
                       std::to_string(it->second) + " and " +
                       std::to_string(line_no));
    }
    if (warnings) {
      for (auto& [key, value] : rec.items()) {
        if (!is_known_field(key)) {
          warnings->push_back("line " + std::to_string(line_no) +
                              ": ignoring unknown field \"" + key + "\"");
        }
      }
    }
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

Dataset load_dataset_file(const std::string& path, DatasetRole role,
                          std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file: " + path);
  return load_dataset(in, role, warnings);
}

std::string serialize_dataset(const Dataset& ds) {
  std::ostringstream out;
  for (const auto& ex : ds.examples) {
    json rec;
    rec["id"] = ex.id;
    rec["query"] = ex.query;
    rec["reasoning_steps"] = ex.reference_steps;
    rec["answer"] = ex.reference_answer;
    if (ex.image_ref) rec["image_ref"] = *ex.image_ref;
    out << rec.dump() << '\n';
  }
  return out.str();
}

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t Rng::next_u64() {
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + next_double() * (hi - lo);
}

bool Rng::bernoulli(double p) { return next_double() < p; }

std::uint64_t Rng::next_below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("next_below: n must be positive");
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

SeedTree::SeedTree(std::uint64_t root_seed)
    : root_(root_seed), node_(mix64(root_seed)) {}

SeedTree SeedTree::child(std::string_view label, std::uint64_t index) const {
  SeedTree c(*this);
  c.node_ = mix64(mix64(node_ ^ fnv1a64(label)) ^
                  (index * 0x9e3779b97f4a7c15ULL + 1));
  c.path_.emplace_back(std::string(label), index);
  return c;
}

}  // namespace corap
