#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "autoevol/data_model.hpp"
#include "autoevol/evolution.hpp"

namespace autoevol {

struct TokenizeOptions {
  bool lowercase = true;
  bool strip_punctuation = true;
};

// ASCII-lowercases, maps ASCII punctuation to spaces and splits on
// whitespace. Non-ASCII bytes are kept inside tokens.
std::vector<std::string> tokenize(std::string_view text, const TokenizeOptions& options = {});

// Set of every n-gram occurring in a reference corpus.
class NgramIndex {
 public:
  NgramIndex(std::span<const std::string> corpus, std::size_t n, TokenizeOptions options = {});

  std::size_t n() const { return n_; }
  std::size_t size() const { return grams_.size(); }
  // True when any n-gram of `text` is in the index.
  bool matches(std::string_view text) const;

 private:
  std::size_t n_;
  TokenizeOptions options_;
  std::unordered_set<std::string> grams_;
};

struct ContaminationReport {
  std::size_t n = 0;
  std::vector<std::string> matched_ids;
  std::size_t match_count = 0;
  std::size_t total_size = 0;

  nlohmann::json to_json() const;
};

// A record matches when any user turn shares an n-gram with any test item.
ContaminationReport contamination_check(std::span<const InstructionRecord> evolved,
                                        std::span<const std::string> test_set, std::size_t n,
                                        const TokenizeOptions& options = {},
                                        std::size_t workers = 4);

// Plain text (one item per line) or JSONL. JSONL lines may be dataset records
// (user turns joined) or objects with a question / prompt / instruction /
// text field.
std::vector<std::string> load_test_set(const std::filesystem::path& path);

enum class DiversityMode {
  DatasetDistinct,  // |union of tags| / N
  PerRecordUnique,  // mean of |distinct tags of record|
};

struct TagMetrics {
  double complexity = 0.0;
  double diversity = 0.0;
  std::map<std::string, std::vector<std::string>> per_record_tags;

  nlohmann::json to_json() const;
};

using TagTable = std::map<std::string, std::vector<std::string>>;

// Records missing from `tags` count as having no tags.
TagMetrics tag_metrics(std::span<const InstructionRecord> records, const TagTable& tags,
                       DiversityMode mode = DiversityMode::DatasetDistinct);

// Lenient parse of a tagger reply: the first JSON array (of strings or of
// objects with a "tag" field) or a single {"tag": ...} object. Returns false
// when nothing usable is found.
bool parse_tag_output(const std::string& output, std::vector<std::string>& tags);

struct TaggingResult {
  TagTable tags;
  std::vector<std::string> unparseable_ids;
};

// One tagger call per record; unparseable replies yield an empty tag list.
TaggingResult tag_records(const EvolutionContext& ctx, std::span<const InstructionRecord> records);

// JSON object {id: [tags]} or JSONL lines {"id": ..., "tags": [...]}.
TagTable load_tag_file(const std::filesystem::path& path);

// Fixed-width text table of contamination reports plus tag metrics.
std::string format_report_table(std::span<const ContaminationReport> reports,
                                const TagMetrics* metrics);

}  // namespace autoevol
