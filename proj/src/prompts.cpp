#include "autoevol/prompts.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "autoevol/errors.hpp"

namespace autoevol {

// Generated from prompts/*.txt at configure time.
const std::map<std::string, std::string>& builtin_prompt_texts();

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

std::string to_string(TemplateName name) {
  switch (name) {
    case TemplateName::InitialMethod: return "initial_method";
    case TemplateName::WeakInitialMethod: return "weak_initial_method";
    case TemplateName::TrajectoryAnalysis: return "trajectory_analysis";
    case TemplateName::MethodOptimization: return "method_optimization";
    case TemplateName::ResponseGeneration: return "response_generation";
    case TemplateName::Tagging: return "tagging";
  }
  return "unknown";
}

const std::vector<TemplateName>& all_template_names() {
  static const std::vector<TemplateName> names = {
      TemplateName::InitialMethod,      TemplateName::WeakInitialMethod,
      TemplateName::TrajectoryAnalysis, TemplateName::MethodOptimization,
      TemplateName::ResponseGeneration, TemplateName::Tagging};
  return names;
}

TemplateName template_name_from_string(const std::string& s) {
  for (auto n : all_template_names()) {
    if (to_string(n) == s) return n;
  }
  throw ValidationError("unknown template name '" + s + "'");
}

std::set<std::string> required_placeholders(TemplateName name) {
  switch (name) {
    case TemplateName::InitialMethod:
    case TemplateName::WeakInitialMethod:
    case TemplateName::ResponseGeneration:
    case TemplateName::Tagging:
      return {"instruction"};
    case TemplateName::TrajectoryAnalysis:
      return {"trajectories"};
    case TemplateName::MethodOptimization:
      return {"feedback", "current_method", "marker", "instruction_slot"};
  }
  return {};
}

std::vector<PromptTemplate::Segment> parse_placeholders(const std::string& body) {
  std::vector<PromptTemplate::Segment> out;
  std::string literal;
  std::size_t i = 0;
  while (i < body.size()) {
    if (body[i] == '{' && i + 1 < body.size() && ident_start(body[i + 1])) {
      std::size_t j = i + 1;
      while (j < body.size() && ident_char(body[j])) ++j;
      if (j < body.size() && body[j] == '}') {
        if (!literal.empty()) out.push_back({false, std::move(literal)});
        literal.clear();
        out.push_back({true, body.substr(i + 1, j - i - 1)});
        i = j + 1;
        continue;
      }
    }
    literal += body[i++];
  }
  if (!literal.empty()) out.push_back({false, std::move(literal)});
  return out;
}

PromptTemplate::PromptTemplate(TemplateName name, std::string body)
    : name_(name), body_(std::move(body)), segments_(parse_placeholders(body_)) {
  for (const auto& s : segments_) {
    if (s.placeholder) placeholders_.insert(s.text);
  }
  for (const auto& req : required_placeholders(name_)) {
    if (!placeholders_.count(req)) {
      throw ValidationError("template '" + to_string(name_) + "' lacks placeholder {" + req + "}");
    }
  }
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& bindings) const {
  std::string out;
  out.reserve(body_.size());
  for (const auto& s : segments_) {
    if (!s.placeholder) {
      out += s.text;
      continue;
    }
    auto it = bindings.find(s.text);
    if (it == bindings.end()) throw RenderError(s.text);
    out += it->second;
  }
  return out;
}

TemplateSet TemplateSet::builtin() {
  TemplateSet set;
  const auto& texts = builtin_prompt_texts();
  for (auto name : all_template_names()) {
    auto it = texts.find(to_string(name));
    if (it == texts.end()) throw Error("builtin template missing: " + to_string(name));
    set.set(PromptTemplate(name, it->second));
  }
  return set;
}

TemplateSet TemplateSet::load_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error("prompt directory not found: " + dir.string());
  }
  TemplateSet set = builtin();
  for (auto name : all_template_names()) {
    const auto path = dir / (to_string(name) + ".txt");
    std::ifstream in(path, std::ios::binary);
    if (!in) continue;
    std::ostringstream ss;
    ss << in.rdbuf();
    set.set(PromptTemplate(name, ss.str()));
  }
  return set;
}

const PromptTemplate& TemplateSet::get(TemplateName name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw Error("template not loaded: " + to_string(name));
  return it->second;
}

void TemplateSet::set(PromptTemplate tmpl) {
  const auto name = tmpl.name();
  templates_.insert_or_assign(name, std::move(tmpl));
}

std::string trim(std::string_view s) {
  const char* ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::string utf8_truncate(std::string_view s, std::size_t max_bytes) {
  if (s.size() <= max_bytes) return std::string(s);
  std::size_t cut = max_bytes;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  return std::string(s.substr(0, cut));
}

ExtractedInstruction extract_final_instruction(const std::string& evol_output,
                                               const std::string& marker) {
  ExtractedInstruction result;
  const auto pos = marker.empty() ? std::string::npos : evol_output.rfind(marker);
  if (pos == std::string::npos) {
    result.text = trim(evol_output);
    result.format_warning = true;
  } else {
    std::string tail = trim(std::string_view(evol_output).substr(pos + marker.size()));
    if (!tail.empty() && tail.front() == ':') tail = trim(std::string_view(tail).substr(1));
    result.text = std::move(tail);
  }
  if (result.text.empty()) throw EmptyEvolutionError("evolution produced an empty instruction");
  return result;
}

std::string render_method(const std::string& method_text, const std::string& instruction) {
  static const std::string slot = "{instruction}";
  if (method_text.find(slot) == std::string::npos) {
    return method_text + "\n\n#Instruction#:\n" + instruction;
  }
  std::string out;
  std::size_t pos = 0;
  for (std::size_t hit = method_text.find(slot); hit != std::string::npos;
       hit = method_text.find(slot, pos)) {
    out.append(method_text, pos, hit - pos);
    out += instruction;
    pos = hit + slot.size();
  }
  out.append(method_text, pos);
  return out;
}

}  // namespace autoevol
