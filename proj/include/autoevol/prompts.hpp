#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace autoevol {

inline constexpr const char* kDefaultMarker = "#Finally Rewritten Instruction#";

enum class TemplateName {
  InitialMethod,
  WeakInitialMethod,
  TrajectoryAnalysis,
  MethodOptimization,
  ResponseGeneration,
  Tagging,
};

std::string to_string(TemplateName name);
TemplateName template_name_from_string(const std::string& s);
const std::vector<TemplateName>& all_template_names();

// Placeholders a template of the given kind must contain.
std::set<std::string> required_placeholders(TemplateName name);

/// A prompt body with `{name}` placeholders.
///
/// A placeholder is `{` + identifier + `}` where the identifier matches
/// [A-Za-z_][A-Za-z0-9_]*. Any other brace is literal text, so JSON snippets
/// and code survive untouched. There is no escape syntax.
class PromptTemplate {
 public:
  struct Segment {
    bool placeholder = false;
    std::string text;  // literal text, or the placeholder name
  };

  PromptTemplate(TemplateName name, std::string body);

  TemplateName name() const { return name_; }
  const std::string& body() const { return body_; }
  const std::vector<Segment>& segments() const { return segments_; }
  // Every placeholder occurring in the body.
  const std::set<std::string>& placeholders() const { return placeholders_; }

  // Exact single-pass substitution. Throws RenderError naming the first
  // placeholder without a binding.
  std::string render(const std::map<std::string, std::string>& bindings) const;

 private:
  TemplateName name_;
  std::string body_;
  std::vector<Segment> segments_;
  std::set<std::string> placeholders_;
};

std::vector<PromptTemplate::Segment> parse_placeholders(const std::string& body);

class TemplateSet {
 public:
  // Templates compiled into the library from prompts/*.txt.
  static TemplateSet builtin();
  // Reads `<dir>/<name>.txt` for every name; names without a file keep the
  // builtin text. Throws ValidationError when a file lacks a required
  // placeholder.
  static TemplateSet load_directory(const std::filesystem::path& dir);

  const PromptTemplate& get(TemplateName name) const;
  void set(PromptTemplate tmpl);

 private:
  std::map<TemplateName, PromptTemplate> templates_;
};

struct ExtractedInstruction {
  std::string text;
  bool format_warning = false;
};

/// Returns the text after the last occurrence of `marker`, trimmed of
/// whitespace and of a single leading ':' left over from "Marker:" headings.
/// Without the marker the whole output is returned trimmed and
/// format_warning is set. Throws EmptyEvolutionError if nothing remains.
ExtractedInstruction extract_final_instruction(const std::string& evol_output,
                                               const std::string& marker = kDefaultMarker);

// Inserts an instruction into an evolving-method text. Only `{instruction}` is
// substituted; if the method has no such slot the instruction is appended
// under an "#Instruction#:" heading.
std::string render_method(const std::string& method_text, const std::string& instruction);

std::string trim(std::string_view s);

// Longest prefix of at most max_bytes that does not split a UTF-8 sequence.
std::string utf8_truncate(std::string_view s, std::size_t max_bytes);

}  // namespace autoevol
