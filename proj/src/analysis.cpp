#include "autoevol/analysis.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "autoevol/concurrency.hpp"
#include "autoevol/errors.hpp"
#include "autoevol/prompts.hpp"

namespace autoevol {
namespace {

std::string gram_key(const std::vector<std::string>& tokens, std::size_t start, std::size_t n) {
  std::string key;
  for (std::size_t i = start; i < start + n; ++i) {
    if (i > start) key += '\x1f';
    key += tokens[i];
  }
  return key;
}

std::string join_user_turns(const InstructionRecord& r) {
  std::string out;
  for (const auto& t : r.user_texts()) {
    if (!out.empty()) out += '\n';
    out += t;
  }
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, const TokenizeOptions& options) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (options.strip_punctuation && c < 0x80 && std::ispunct(c)) c = ' ';
    if (c < 0x80 && std::isspace(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    cur += options.lowercase && c < 0x80 ? static_cast<char>(std::tolower(c))
                                         : static_cast<char>(c);
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

NgramIndex::NgramIndex(std::span<const std::string> corpus, std::size_t n, TokenizeOptions options)
    : n_(n), options_(options) {
  if (n_ == 0) throw ValidationError("n-gram size must be >= 1");
  for (const auto& item : corpus) {
    auto tokens = tokenize(item, options_);
    for (std::size_t i = 0; i + n_ <= tokens.size(); ++i) grams_.insert(gram_key(tokens, i, n_));
  }
}

bool NgramIndex::matches(std::string_view text) const {
  auto tokens = tokenize(text, options_);
  for (std::size_t i = 0; i + n_ <= tokens.size(); ++i) {
    if (grams_.count(gram_key(tokens, i, n_))) return true;
  }
  return false;
}

nlohmann::json ContaminationReport::to_json() const {
  return {{"n", n},
          {"match_count", match_count},
          {"total_size", total_size},
          {"rate", total_size ? static_cast<double>(match_count) / static_cast<double>(total_size) : 0.0},
          {"matched_ids", matched_ids}};
}

ContaminationReport contamination_check(std::span<const InstructionRecord> evolved,
                                        std::span<const std::string> test_set, std::size_t n,
                                        const TokenizeOptions& options, std::size_t workers) {
  if (test_set.empty()) throw ValidationError("test set is empty");
  const NgramIndex index(test_set, n, options);

  std::vector<char> hit(evolved.size(), 0);
  parallel_for(evolved.size(), workers, [&](std::size_t i) {
    for (const auto& t : evolved[i].turns) {
      if (t.role == Role::User && index.matches(t.text)) {
        hit[i] = 1;
        break;
      }
    }
  });

  ContaminationReport report;
  report.n = n;
  report.total_size = evolved.size();
  for (std::size_t i = 0; i < evolved.size(); ++i) {
    if (hit[i]) report.matched_ids.push_back(evolved[i].id);
  }
  report.match_count = report.matched_ids.size();
  return report;
}

std::vector<std::string> load_test_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open test set " + path.string());
  std::vector<std::string> items;
  const bool jsonl_ext = path.extension() == ".jsonl";
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (!jsonl_ext && t.front() != '{') {
      items.push_back(t);
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(t);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(e.what(), line_no);
    }
    if (j.contains("turns")) {
      items.push_back(join_user_turns(record_from_json(j)));
      continue;
    }
    bool found = false;
    for (const char* key : {"question", "prompt", "instruction", "text"}) {
      if (j.contains(key) && j[key].is_string()) {
        items.push_back(j[key].get<std::string>());
        found = true;
        break;
      }
    }
    if (!found) throw ParseError("test item has no text field", line_no);
  }
  return items;
}

nlohmann::json TagMetrics::to_json() const {
  return {{"complexity", complexity},
          {"diversity", diversity},
          {"records", per_record_tags.size()},
          {"per_record_tags", per_record_tags}};
}

TagMetrics tag_metrics(std::span<const InstructionRecord> records, const TagTable& tags,
                       DiversityMode mode) {
  TagMetrics m;
  if (records.empty()) return m;
  std::size_t total = 0;
  std::size_t per_record_unique = 0;
  std::set<std::string> distinct;
  for (const auto& r : records) {
    auto it = tags.find(r.id);
    std::vector<std::string> list = it == tags.end() ? std::vector<std::string>{} : it->second;
    total += list.size();
    std::set<std::string> own(list.begin(), list.end());
    per_record_unique += own.size();
    distinct.insert(own.begin(), own.end());
    m.per_record_tags[r.id] = std::move(list);
  }
  const double n = static_cast<double>(records.size());
  m.complexity = static_cast<double>(total) / n;
  m.diversity = mode == DiversityMode::DatasetDistinct
                    ? static_cast<double>(distinct.size()) / n
                    : static_cast<double>(per_record_unique) / n;
  return m;
}

bool parse_tag_output(const std::string& output, std::vector<std::string>& tags) {
  tags.clear();
  auto take = [&](const nlohmann::json& e) {
    if (e.is_string()) {
      tags.push_back(e.get<std::string>());
    } else if (e.is_object() && e.contains("tag") && e["tag"].is_string()) {
      tags.push_back(e["tag"].get<std::string>());
    }
  };
  const auto open = output.find('[');
  const auto close = output.rfind(']');
  if (open != std::string::npos && close != std::string::npos && close > open) {
    auto j = nlohmann::json::parse(output.substr(open, close - open + 1), nullptr, false);
    if (j.is_array()) {
      for (const auto& e : j) take(e);
      return true;
    }
  }
  const auto obrace = output.find('{');
  const auto cbrace = output.rfind('}');
  if (obrace != std::string::npos && cbrace != std::string::npos && cbrace > obrace) {
    auto j = nlohmann::json::parse(output.substr(obrace, cbrace - obrace + 1), nullptr, false);
    if (j.is_object() && j.contains("tag")) {
      take(j);
      return true;
    }
  }
  return false;
}

TaggingResult tag_records(const EvolutionContext& ctx, std::span<const InstructionRecord> records) {
  std::vector<std::vector<std::string>> lists(records.size());
  std::vector<char> ok(records.size(), 0);
  parallel_for(records.size(), ctx.settings.workers, [&](std::size_t i) {
    GenerationRequest req;
    const std::string text = join_user_turns(records[i]);
    req.user_prompt = ctx.templates.get(TemplateName::Tagging).render({{"instruction", text}});
    req.temperature = 0.0;
    req.max_tokens = ctx.settings.max_tokens;
    req.role_tag = RoleTag::Tagger;
    req.subject = text;
    req.item_index = i;
    try {
      ok[i] = parse_tag_output(ctx.gateway.generate(req, "analyze.tag"), lists[i]) ? 1 : 0;
    } catch (const Error&) {
      ok[i] = 0;
    }
  });
  TaggingResult result;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!ok[i]) {
      lists[i].clear();
      result.unparseable_ids.push_back(records[i].id);
    }
    result.tags[records[i].id] = std::move(lists[i]);
  }
  return result;
}

TagTable load_tag_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open tag file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string content = ss.str();
  TagTable table;
  auto whole = nlohmann::json::parse(content, nullptr, false);
  if (whole.is_object() && !whole.contains("id")) {
    for (const auto& [id, tags] : whole.items()) {
      table[id] = tags.get<std::vector<std::string>>();
    }
    return table;
  }
  std::istringstream lines(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      table[j.at("id").get<std::string>()] = j.at("tags").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return table;
}

std::string format_report_table(std::span<const ContaminationReport> reports,
                                const TagMetrics* metrics) {
  std::ostringstream out;
  out << "n-gram  matches  total  rate\n";
  for (const auto& r : reports) {
    const double rate =
        r.total_size ? static_cast<double>(r.match_count) / static_cast<double>(r.total_size) : 0.0;
    char line[96];
    std::snprintf(line, sizeof line, "%6zu  %7zu  %5zu  %s\n", r.n, r.match_count, r.total_size,
                  fixed(rate, 4).c_str());
    out << line;
  }
  if (metrics) {
    out << "complexity " << fixed(metrics->complexity, 3) << "  diversity "
        << fixed(metrics->diversity, 3) << "  records " << metrics->per_record_tags.size()
        << "\n";
  }
  return out.str();
}

}  // namespace autoevol
