#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace autoevol {

inline constexpr const char* kRecordSchema = "autoevol.record/1";

enum class Role { User, Assistant };

std::string to_string(Role role);
Role role_from_string(const std::string& s);

struct Turn {
  Role role = Role::User;
  std::string text;

  bool operator==(const Turn&) const = default;
};

// One instruction(-response) datum. Multi-turn conversations are one record.
struct InstructionRecord {
  std::string id;
  std::vector<Turn> turns;
  std::string source;
  int round = 0;
  std::optional<std::string> parent_id;

  bool operator==(const InstructionRecord&) const = default;

  // Text of the last user turn; this is what evolution operates on for
  // single-turn data.
  const std::string& final_user_text() const;
  std::vector<std::string> user_texts() const;
};

// Throws ValidationError when the record breaks a structural invariant.
void validate(const InstructionRecord& record);

nlohmann::json to_json(const InstructionRecord& record);
InstructionRecord record_from_json(const nlohmann::json& j);

std::vector<InstructionRecord> load_dataset(const std::filesystem::path& path);
std::vector<InstructionRecord> parse_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, std::span<const InstructionRecord> records);
void write_dataset(std::ostream& out, std::span<const InstructionRecord> records);

/// Project-wide sampling generator.
///
/// mt19937_64 seeded through SplitMix64 from (seed, stream). Bounded draws use
/// rejection sampling rather than std::uniform_int_distribution so sequences
/// are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  double unit();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

struct DatasetSplit {
  std::vector<InstructionRecord> optimization_pool;
  std::vector<InstructionRecord> dev_set;
  std::vector<InstructionRecord> full_set;
  std::uint64_t rng_seed = 0;
};

DatasetSplit make_split(std::vector<InstructionRecord> records, std::size_t pool_size,
                        std::size_t dev_size, std::uint64_t seed);

// Deterministic in (split.rng_seed, step); no record repeats within a batch.
std::vector<InstructionRecord> next_minibatch(const DatasetSplit& split, std::uint64_t step,
                                              std::size_t batch_size);

}  // namespace autoevol
