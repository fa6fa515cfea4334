#include "autoevol/data_model.hpp"

#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "autoevol/errors.hpp"

namespace autoevol {

std::string to_string(Role role) { return role == Role::User ? "user" : "assistant"; }

Role role_from_string(const std::string& s) {
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  throw ValidationError("unknown role '" + s + "'");
}

const std::string& InstructionRecord::final_user_text() const {
  for (auto it = turns.rbegin(); it != turns.rend(); ++it) {
    if (it->role == Role::User) return it->text;
  }
  throw ValidationError("record '" + id + "' has no user turn");
}

std::vector<std::string> InstructionRecord::user_texts() const {
  std::vector<std::string> out;
  for (const auto& t : turns) {
    if (t.role == Role::User) out.push_back(t.text);
  }
  return out;
}

void validate(const InstructionRecord& record) {
  if (record.id.empty()) throw ValidationError("record id is empty");
  if (record.turns.empty()) throw ValidationError("record '" + record.id + "' has no turns");
  if (record.turns.front().role != Role::User) {
    throw ValidationError("record '" + record.id + "' must start with a user turn");
  }
  if (record.round < 0) throw ValidationError("record '" + record.id + "' has negative round");
  if ((record.round == 0) != !record.parent_id.has_value()) {
    throw ValidationError("record '" + record.id +
                          "': parent_id must be present exactly when round > 0");
  }
}

nlohmann::json to_json(const InstructionRecord& record) {
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& t : record.turns) {
    turns.push_back({{"role", to_string(t.role)}, {"text", t.text}});
  }
  nlohmann::json j = {{"schema", kRecordSchema},
                      {"id", record.id},
                      {"turns", std::move(turns)},
                      {"source", record.source},
                      {"round", record.round}};
  if (record.parent_id) j["parent_id"] = *record.parent_id;
  return j;
}

InstructionRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("record is not a JSON object");
  if (auto it = j.find("schema"); it != j.end() && *it != kRecordSchema) {
    throw ValidationError("unsupported schema " + it->dump());
  }
  InstructionRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    for (const auto& t : j.at("turns")) {
      r.turns.push_back({role_from_string(t.at("role").get<std::string>()),
                         t.at("text").get<std::string>()});
    }
    r.source = j.value("source", std::string{});
    r.round = j.value("round", 0);
    if (auto it = j.find("parent_id"); it != j.end() && !it->is_null()) {
      r.parent_id = it->get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(e.what());
  }
  validate(r);
  return r;
}

std::vector<InstructionRecord> parse_dataset(std::istream& in) {
  std::vector<InstructionRecord> records;
  std::unordered_map<std::string, std::size_t> first_line;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(e.what(), line_no);
    }
    InstructionRecord r;
    try {
      r = record_from_json(j);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
    auto [it, inserted] = first_line.emplace(r.id, line_no);
    if (!inserted) {
      throw ValidationError("duplicate id '" + r.id + "' on lines " + std::to_string(it->second) +
                            " and " + std::to_string(line_no));
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<InstructionRecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset " + path.string());
  return parse_dataset(in);
}

void write_dataset(std::ostream& out, std::span<const InstructionRecord> records) {
  for (const auto& r : records) out << to_json(r).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
}

void save_dataset(const std::filesystem::path& path, std::span<const InstructionRecord> records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write dataset " + path.string());
  write_dataset(out, records);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : engine_(splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL))) {}

std::uint64_t Rng::below(std::uint64_t bound) {
  // Reject the top partial range so every residue is equally likely.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % bound;
}

double Rng::unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

DatasetSplit make_split(std::vector<InstructionRecord> records, std::size_t pool_size,
                        std::size_t dev_size, std::uint64_t seed) {
  if (pool_size + dev_size > records.size()) {
    throw SizeError("pool_size + dev_size = " + std::to_string(pool_size + dev_size) +
                    " exceeds dataset size " + std::to_string(records.size()));
  }
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed, /*stream=*/0);
  rng.shuffle(order);

  DatasetSplit split;
  split.rng_seed = seed;
  split.dev_set.reserve(dev_size);
  split.optimization_pool.reserve(pool_size);
  for (std::size_t i = 0; i < dev_size; ++i) split.dev_set.push_back(records[order[i]]);
  for (std::size_t i = dev_size; i < dev_size + pool_size; ++i) {
    split.optimization_pool.push_back(records[order[i]]);
  }
  split.full_set = std::move(records);
  return split;
}

std::vector<InstructionRecord> next_minibatch(const DatasetSplit& split, std::uint64_t step,
                                              std::size_t batch_size) {
  const auto& pool = split.optimization_pool;
  if (pool.empty()) throw StateError("optimization pool is empty");
  if (batch_size > pool.size()) {
    throw SizeError("batch_size " + std::to_string(batch_size) + " exceeds pool size " +
                    std::to_string(pool.size()));
  }
  // Partial Fisher-Yates: the first batch_size slots are a uniform sample.
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(split.rng_seed, /*stream=*/step + 1);
  for (std::size_t i = 0; i < batch_size; ++i) {
    std::size_t j = i + rng.below(order.size() - i);
    std::swap(order[i], order[j]);
  }
  std::vector<InstructionRecord> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) batch.push_back(pool[order[i]]);
  return batch;
}

}  // namespace autoevol
