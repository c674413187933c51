#pragma once

#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "unetkit/tensor.hpp"

namespace unetkit {

inline constexpr int kLesionCount = 6;

// Stable machine keys, display names, and findings order for the six
// segmented structures.
extern const std::array<const char*, kLesionCount> kLesionKeys;
extern const std::array<const char*, kLesionCount> kLesionNames;

enum class LesionState { Absent, Present, Unknown };

struct Findings {
  int grade = 0;  // 0..4
  std::array<LesionState, kLesionCount> states{};  // defaults to Absent
  std::array<double, kLesionCount> fractions{};    // positive-pixel fraction, 0 when unknown

  bool operator==(const Findings&) const = default;
};

enum class Urgency { Routine, Soon, Urgent, Immediate };

const char* to_string(Urgency u);
const char* grade_label(int grade);  // throws ValueError outside 0..4

struct Report {
  int grade = 0;
  Urgency urgency = Urgency::Routine;
  std::vector<std::string> lesion_lines;
  std::string recommendation;
  std::string block;  // fenced machine-readable key=value block
  std::string text;   // full plain-text report (block included)
};

// Editable phrase table: one line per grade, one per present lesion.
struct ReportTemplates {
  std::array<std::string, 5> grade_phrase;
  std::array<std::string, kLesionCount> lesion_phrase;

  static ReportTemplates defaults();
};

// key=value file with keys grade.<0..4> and lesion.<machine key>; unknown
// keys are a ConfigError, missing keys keep their defaults.
ReportTemplates load_templates(const std::string& path);

// Lesion boolean = (foreground fraction >= presence_threshold), inclusive.
// Lesions without a mask come back Unknown with fraction 0.
Findings findings_from_masks(const std::map<std::string, Tensor>& masks_by_key,
                             double presence_threshold, int grade);

// Deterministic and total over valid Findings. Escalation: haemorrhage
// present with grade <= 1 raises urgency one tier and appends a discordance
// note.
Report compose_report(const Findings& f, const ReportTemplates& templates);
Report compose_report(const Findings& f);

std::string findings_block(const Findings& f);

// Extracts and parses the fenced block; throws FormatError when absent or
// malformed. parse(findings_block(f)) == f exactly.
Findings parse_findings_block(const std::string& report_text);

// One bounded request: structured prompt in, completion text out. Implement
// `complete` to throw on transport/timeout/protocol failure.
struct TextClient {
  virtual ~TextClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

struct ClientConfig {
  std::string endpoint;                          // e.g. http://host:port/path
  std::string token_env = "UNETKIT_API_TOKEN";   // bearer token read from env
  double timeout_seconds = 10.0;
};

// POSTs {"prompt": ...} as JSON and expects {"text": ...} back.
std::unique_ptr<TextClient> make_http_client(const ClientConfig& config);

// Appends external prose to the report text. Never changes urgency or the
// structured block; any client failure falls back to the base report plus a
// note saying so. client == nullptr returns base unchanged.
Report enrich_via_external(const Findings& f, const Report& base, TextClient* client);

}  // namespace unetkit
