#include "unetkit/report.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "unetkit/errors.hpp"

namespace unetkit {

const std::array<const char*, kLesionCount> kLesionKeys = {
    "blood_vessel_abnormal", "haemorrhage",  "hard_exudate",
    "microaneurysm",         "soft_exudate", "optic_disc_flag"};

const std::array<const char*, kLesionCount> kLesionNames = {
    "blood vessel", "haemorrhage", "hard exudate", "microaneurysm", "soft exudate", "optic disc"};

const char* to_string(Urgency u) {
  switch (u) {
    case Urgency::Routine: return "routine";
    case Urgency::Soon: return "soon";
    case Urgency::Urgent: return "urgent";
    case Urgency::Immediate: return "immediate";
  }
  return "routine";
}

const char* grade_label(int grade) {
  switch (grade) {
    case 0: return "no diabetic retinopathy";
    case 1: return "mild nonproliferative diabetic retinopathy";
    case 2: return "moderate nonproliferative diabetic retinopathy";
    case 3: return "severe nonproliferative diabetic retinopathy";
    case 4: return "proliferative diabetic retinopathy";
  }
  throw ValueError("grade must be in {0..4}, got " + std::to_string(grade));
}

ReportTemplates ReportTemplates::defaults() {
  ReportTemplates t;
  t.grade_phrase = {
      "No signs of diabetic retinopathy; continue routine annual screening.",
      "Findings consistent with the occurrence of microaneurysms; arrange follow-up screening.",
      "Moderate nonproliferative changes; refer for ophthalmologic review soon.",
      "Severe nonproliferative retinopathy; urgent specialist referral indicated.",
      "Indicators of proliferative disease; immediate ophthalmology referral required.",
  };
  t.lesion_phrase = {
      "abnormal blood vessel pattern on segmentation",
      "retinal haemorrhage regions detected",
      "hard exudate deposits detected",
      "microaneurysm clusters detected",
      "soft exudate (cotton wool) spots detected",
      "optic disc region flagged for review",
  };
  return t;
}

namespace {

int lesion_index(const std::string& key) {
  for (int i = 0; i < kLesionCount; ++i) {
    if (key == kLesionKeys[static_cast<std::size_t>(i)]) return i;
  }
  return -1;
}

const char* state_str(LesionState s) {
  switch (s) {
    case LesionState::Absent: return "absent";
    case LesionState::Present: return "present";
    case LesionState::Unknown: return "unknown";
  }
  return "unknown";
}

void validate_findings(const Findings& f) {
  (void)grade_label(f.grade);
  for (int i = 0; i < kLesionCount; ++i) {
    const double fr = f.fractions[static_cast<std::size_t>(i)];
    if (!(fr >= 0.0 && fr <= 1.0)) {
      throw ValueError(std::string("findings fraction for ") +
                       kLesionKeys[static_cast<std::size_t>(i)] + " outside [0,1]: " +
                       std::to_string(fr));
    }
  }
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

ReportTemplates load_templates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read template file: " + path);
  ReportTemplates t = ReportTemplates::defaults();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.starts_with("grade.")) {
      const std::string idx = key.substr(6);
      if (idx.size() == 1 && idx[0] >= '0' && idx[0] <= '4') {
        t.grade_phrase[static_cast<std::size_t>(idx[0] - '0')] = value;
        continue;
      }
    } else if (key.starts_with("lesion.")) {
      const int li = lesion_index(key.substr(7));
      if (li >= 0) {
        t.lesion_phrase[static_cast<std::size_t>(li)] = value;
        continue;
      }
    }
    throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown template key '" + key +
                      "'");
  }
  return t;
}

Findings findings_from_masks(const std::map<std::string, Tensor>& masks_by_key,
                             double presence_threshold, int grade) {
  if (!(presence_threshold >= 0.0 && presence_threshold <= 1.0)) {
    throw ValueError("presence threshold must be in [0,1], got " +
                     std::to_string(presence_threshold));
  }
  (void)grade_label(grade);
  for (const auto& [key, mask] : masks_by_key) {
    if (lesion_index(key) < 0) {
      throw ValueError("unknown lesion key '" + key + "'");
    }
    for (std::size_t i = 0; i < mask.data.size(); ++i) {
      if (mask.data[i] != 0.0f && mask.data[i] != 1.0f) {
        throw ValueError("lesion mask '" + key + "' is not binary at flat index " +
                         std::to_string(i));
      }
    }
  }
  Findings f;
  f.grade = grade;
  for (int i = 0; i < kLesionCount; ++i) {
    const auto it = masks_by_key.find(kLesionKeys[static_cast<std::size_t>(i)]);
    if (it == masks_by_key.end()) {
      f.states[static_cast<std::size_t>(i)] = LesionState::Unknown;
      f.fractions[static_cast<std::size_t>(i)] = 0.0;
      continue;
    }
    const Tensor& mask = it->second;
    long fg = 0;
    for (float v : mask.data) fg += v == 1.0f ? 1 : 0;
    const double fraction = static_cast<double>(fg) / static_cast<double>(mask.data.size());
    f.fractions[static_cast<std::size_t>(i)] = fraction;
    f.states[static_cast<std::size_t>(i)] =
        fraction >= presence_threshold ? LesionState::Present : LesionState::Absent;
  }
  return f;
}

std::string findings_block(const Findings& f) {
  std::string out = "```findings\n";
  out += "grade=" + std::to_string(f.grade) + "\n";
  char buf[64];
  for (int i = 0; i < kLesionCount; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    out += std::string(kLesionKeys[idx]) + "=" + state_str(f.states[idx]) + "\n";
    std::snprintf(buf, sizeof(buf), "%.17g", f.fractions[idx]);
    out += std::string(kLesionKeys[idx]) + "_fraction=" + buf + "\n";
  }
  out += "```";
  return out;
}

Findings parse_findings_block(const std::string& report_text) {
  const std::string open = "```findings\n";
  const std::size_t start = report_text.find(open);
  if (start == std::string::npos) {
    throw FormatError("no ```findings block in report text");
  }
  const std::size_t body_start = start + open.size();
  const std::size_t end = report_text.find("```", body_start);
  if (end == std::string::npos) {
    throw FormatError("unterminated ```findings block");
  }
  std::istringstream body(report_text.substr(body_start, end - body_start));

  Findings f;
  bool have_grade = false;
  std::array<bool, kLesionCount> have_state{}, have_fraction{};
  std::string line;
  while (std::getline(body, line)) {
    const std::string s = trim(line);
    if (s.empty()) continue;
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) throw FormatError("findings block line without '=': " + s);
    const std::string key = s.substr(0, eq);
    const std::string value = s.substr(eq + 1);
    if (key == "grade") {
      if (value.size() != 1 || value[0] < '0' || value[0] > '4') {
        throw FormatError("findings block grade out of range: " + value);
      }
      f.grade = value[0] - '0';
      have_grade = true;
      continue;
    }
    if (key.ends_with("_fraction")) {
      const int li = lesion_index(key.substr(0, key.size() - 9));
      if (li < 0) throw FormatError("findings block has unknown key '" + key + "'");
      char* parse_end = nullptr;
      const double v = std::strtod(value.c_str(), &parse_end);
      if (parse_end == value.c_str() || *parse_end != '\0') {
        throw FormatError("findings block fraction is not a number: " + value);
      }
      f.fractions[static_cast<std::size_t>(li)] = v;
      have_fraction[static_cast<std::size_t>(li)] = true;
      continue;
    }
    const int li = lesion_index(key);
    if (li < 0) throw FormatError("findings block has unknown key '" + key + "'");
    if (value == "present") f.states[static_cast<std::size_t>(li)] = LesionState::Present;
    else if (value == "absent") f.states[static_cast<std::size_t>(li)] = LesionState::Absent;
    else if (value == "unknown") f.states[static_cast<std::size_t>(li)] = LesionState::Unknown;
    else throw FormatError("findings block has invalid state '" + value + "' for " + key);
    have_state[static_cast<std::size_t>(li)] = true;
  }
  if (!have_grade) throw FormatError("findings block missing grade");
  for (int i = 0; i < kLesionCount; ++i) {
    if (!have_state[static_cast<std::size_t>(i)] || !have_fraction[static_cast<std::size_t>(i)]) {
      throw FormatError(std::string("findings block missing entries for ") +
                        kLesionKeys[static_cast<std::size_t>(i)]);
    }
  }
  return f;
}

Report compose_report(const Findings& f) { return compose_report(f, ReportTemplates::defaults()); }

Report compose_report(const Findings& f, const ReportTemplates& templates) {
  validate_findings(f);
  Report r;
  r.grade = f.grade;
  switch (f.grade) {
    case 0:
    case 1: r.urgency = Urgency::Routine; break;
    case 2: r.urgency = Urgency::Soon; break;
    case 3: r.urgency = Urgency::Urgent; break;
    default: r.urgency = Urgency::Immediate; break;
  }
  const bool haemorrhage_present = f.states[1] == LesionState::Present;
  const bool escalated = haemorrhage_present && f.grade <= 1;
  if (escalated && r.urgency == Urgency::Routine) r.urgency = Urgency::Soon;

  char buf[128];
  for (int i = 0; i < kLesionCount; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    std::string line = std::string("- ") + kLesionNames[idx] + ": " + state_str(f.states[idx]);
    switch (f.states[idx]) {
      case LesionState::Present:
        std::snprintf(buf, sizeof(buf), " (fraction %.6f)", f.fractions[idx]);
        line += buf;
        break;
      case LesionState::Unknown:
        line += " (mask missing)";
        break;
      case LesionState::Absent:
        break;
    }
    r.lesion_lines.push_back(std::move(line));
  }

  r.recommendation = templates.grade_phrase[static_cast<std::size_t>(f.grade)];
  bool any_present = false;
  for (const LesionState s : f.states) any_present |= (s == LesionState::Present);
  if (any_present) {
    r.recommendation += " Segmentation findings:";
    for (int i = 0; i < kLesionCount; ++i) {
      if (f.states[static_cast<std::size_t>(i)] == LesionState::Present) {
        r.recommendation += " " + std::string(templates.lesion_phrase[static_cast<std::size_t>(i)]) + ";";
      }
    }
    r.recommendation.back() = '.';
  } else if (f.grade == 0) {
    r.recommendation += " No lesions detected on segmentation.";
  }
  if (escalated) {
    r.recommendation +=
        " Note: haemorrhage detected despite a grade of " + std::to_string(f.grade) +
        "; findings are discordant and urgency was escalated one tier.";
  }

  r.block = findings_block(f);

  std::string text;
  text += "Diabetic retinopathy screening report\n";
  text += "======================================\n";
  text += "grade: " + std::to_string(f.grade) + " (" + grade_label(f.grade) + ")\n";
  text += "urgency: " + std::string(to_string(r.urgency)) + "\n\n";
  text += "findings:\n";
  for (const auto& line : r.lesion_lines) text += "  " + line + "\n";
  text += "\nrecommendation:\n  " + r.recommendation + "\n\n";
  text += r.block + "\n";
  r.text = std::move(text);
  return r;
}

Report enrich_via_external(const Findings& f, const Report& base, TextClient* client) {
  if (!client) return base;
  std::string prompt;
  prompt += "You are drafting patient-friendly wording for a diabetic retinopathy screening "
            "result. Do not change the clinical recommendation.\n";
  prompt += "grade: " + std::to_string(f.grade) + " (" + grade_label(f.grade) + ")\n";
  for (int i = 0; i < kLesionCount; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    prompt += std::string(kLesionNames[idx]) + ": " + state_str(f.states[idx]) + "\n";
  }
  prompt += "recommendation: " + base.recommendation + "\n";

  Report out = base;
  std::string completion;
  try {
    completion = client->complete(prompt);
  } catch (const std::exception& e) {
    out.text += "\n[external enrichment unavailable: " + std::string(e.what()) + "]\n";
    return out;
  }
  if (trim(completion).empty()) {
    out.text += "\n[external enrichment empty]\n";
    return out;
  }
  out.text += "\nexternal enrichment (non-authoritative):\n" + completion + "\n";
  return out;
}

}  // namespace unetkit
