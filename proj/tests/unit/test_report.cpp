#include <doctest.h>

#include <fstream>
#include <map>

#include "reference_ops.hpp"
#include "unetkit/errors.hpp"
#include "unetkit/report.hpp"

using unetkit::Findings;
using unetkit::LesionState;
using unetkit::Report;
using unetkit::Tensor;
using unetkit::Urgency;

namespace {

const std::array<LesionState, 3> kAllStates = {LesionState::Absent, LesionState::Present,
                                               LesionState::Unknown};

Findings make_findings(int grade, LesionState fill = LesionState::Absent) {
  Findings f;
  f.grade = grade;
  f.states.fill(fill);
  return f;
}

int urgency_rank(Urgency u) { return static_cast<int>(u); }

}  // namespace

TEST_CASE("base urgency follows the grade") {
  CHECK(unetkit::compose_report(make_findings(0)).urgency == Urgency::Routine);
  CHECK(unetkit::compose_report(make_findings(1)).urgency == Urgency::Routine);
  CHECK(unetkit::compose_report(make_findings(2)).urgency == Urgency::Soon);
  CHECK(unetkit::compose_report(make_findings(3)).urgency == Urgency::Urgent);
  CHECK(unetkit::compose_report(make_findings(4)).urgency == Urgency::Immediate);
}

TEST_CASE("grade four is always immediate regardless of lesion pattern") {
  for (LesionState s : kAllStates) {
    auto r = unetkit::compose_report(make_findings(4, s));
    CHECK(r.urgency == Urgency::Immediate);
  }
}

TEST_CASE("haemorrhage with a low grade escalates one tier and notes discordance") {
  Findings f = make_findings(0);
  f.states[1] = LesionState::Present;  // haemorrhage
  f.fractions[1] = 0.02;
  auto r = unetkit::compose_report(f);
  CHECK(r.urgency == Urgency::Soon);
  CHECK(r.recommendation.find("discordan") != std::string::npos);

  Findings g = make_findings(1);
  g.states[1] = LesionState::Present;
  CHECK(unetkit::compose_report(g).urgency == Urgency::Soon);

  // Grade 2 already maps to Soon; haemorrhage must not escalate further.
  Findings h = make_findings(2);
  h.states[1] = LesionState::Present;
  CHECK(unetkit::compose_report(h).urgency == Urgency::Soon);
}

TEST_CASE("composer is total over every grade and lesion state combination") {
  // 5 grades x 3^6 state vectors = 3645 inputs; all must compose cleanly.
  int composed = 0;
  for (int grade = 0; grade <= 4; ++grade) {
    for (int code = 0; code < 729; ++code) {
      Findings f;
      f.grade = grade;
      int c = code;
      for (int i = 0; i < unetkit::kLesionCount; ++i) {
        f.states[static_cast<std::size_t>(i)] = kAllStates[static_cast<std::size_t>(c % 3)];
        if (f.states[static_cast<std::size_t>(i)] == LesionState::Present) {
          f.fractions[static_cast<std::size_t>(i)] = 0.01 * (i + 1);
        }
        c /= 3;
      }
      auto r = unetkit::compose_report(f);
      CHECK(!r.text.empty());
      CHECK(!r.recommendation.empty());
      CHECK(r.lesion_lines.size() == unetkit::kLesionCount);
      CHECK(r.text.find("```findings") != std::string::npos);
      // Round-trip through the machine block.
      CHECK(unetkit::parse_findings_block(r.text) == f);
      ++composed;
    }
  }
  CHECK(composed == 3645);
}

TEST_CASE("urgency never decreases when the grade increases") {
  for (int code = 0; code < 729; ++code) {
    Findings f;
    int c = code;
    for (int i = 0; i < unetkit::kLesionCount; ++i) {
      f.states[static_cast<std::size_t>(i)] = kAllStates[static_cast<std::size_t>(c % 3)];
      c /= 3;
    }
    int prev = -1;
    for (int grade = 0; grade <= 4; ++grade) {
      f.grade = grade;
      const int rank = urgency_rank(unetkit::compose_report(f).urgency);
      CHECK(rank >= prev);
      prev = rank;
    }
  }
}

TEST_CASE("composer rejects invalid grades") {
  CHECK_THROWS_AS(unetkit::compose_report(make_findings(-1)), unetkit::ValueError);
  CHECK_THROWS_AS(unetkit::compose_report(make_findings(5)), unetkit::ValueError);
  CHECK_THROWS_AS(unetkit::grade_label(7), unetkit::ValueError);
}

TEST_CASE("findings block round-trips exact fractions") {
  Findings f = make_findings(3);
  f.states[0] = LesionState::Present;
  f.fractions[0] = 0.1234567890123456789;  // not representable, whatever sticks
  f.states[2] = LesionState::Present;
  f.fractions[2] = 1.0 / 3.0;
  f.states[4] = LesionState::Unknown;
  const std::string block = unetkit::findings_block(f);
  CHECK(unetkit::parse_findings_block(block) == f);
}

TEST_CASE("parse_findings_block rejects malformed input") {
  CHECK_THROWS_AS(unetkit::parse_findings_block("no block here"), unetkit::FormatError);
  CHECK_THROWS_AS(unetkit::parse_findings_block("```findings\ngrade=1\n"), unetkit::FormatError);

  Findings f = make_findings(2);
  std::string block = unetkit::findings_block(f);

  auto corrupt = block;
  corrupt.replace(corrupt.find("grade=2"), 7, "grade=9");
  CHECK_THROWS_AS(unetkit::parse_findings_block(corrupt), unetkit::FormatError);

  corrupt = block;
  corrupt.replace(corrupt.find("=absent"), 7, "=maybe");
  CHECK_THROWS_AS(unetkit::parse_findings_block(corrupt), unetkit::FormatError);

  // Dropping one required line is a FormatError too.
  corrupt = block;
  const auto pos = corrupt.find("haemorrhage=");
  const auto eol = corrupt.find('\n', pos);
  corrupt.erase(pos, eol - pos + 1);
  CHECK_THROWS_AS(unetkit::parse_findings_block(corrupt), unetkit::FormatError);
}

TEST_CASE("findings_from_masks applies the inclusive presence threshold") {
  // 41 of 4096 pixels is 1.0009...% so threshold 0.01 marks it present.
  Tensor just_over(1, 1, 64, 64);
  just_over.fill(0.0f);
  for (int i = 0; i < 41; ++i) just_over.data[static_cast<std::size_t>(i)] = 1.0f;
  Tensor just_under(1, 1, 64, 64);
  just_under.fill(0.0f);
  for (int i = 0; i < 40; ++i) just_under.data[static_cast<std::size_t>(i)] = 1.0f;

  std::map<std::string, Tensor> masks;
  masks["haemorrhage"] = just_over;
  masks["hard_exudate"] = just_under;
  auto f = unetkit::findings_from_masks(masks, 0.01, 2);
  CHECK(f.grade == 2);
  CHECK(f.states[1] == LesionState::Present);
  CHECK(f.fractions[1] == doctest::Approx(41.0 / 4096.0));
  CHECK(f.states[2] == LesionState::Absent);
  CHECK(f.fractions[2] == doctest::Approx(40.0 / 4096.0));
  // No mask supplied: unknown with zero fraction.
  CHECK(f.states[0] == LesionState::Unknown);
  CHECK(f.fractions[0] == 0.0);
  CHECK(f.states[5] == LesionState::Unknown);
}

TEST_CASE("exactly at threshold counts as present") {
  Tensor m(1, 1, 10, 10);
  m.fill(0.0f);
  for (int i = 0; i < 10; ++i) m.data[static_cast<std::size_t>(i)] = 1.0f;
  std::map<std::string, Tensor> masks{{"microaneurysm", m}};
  auto f = unetkit::findings_from_masks(masks, 0.1, 1);
  CHECK(f.states[3] == LesionState::Present);
}

TEST_CASE("findings_from_masks validates keys, grades and masks") {
  std::map<std::string, Tensor> bad_key{{"tumor", Tensor(1, 1, 2, 2)}};
  CHECK_THROWS_AS(unetkit::findings_from_masks(bad_key, 0.01, 0), unetkit::ValueError);

  Tensor nonbinary(1, 1, 2, 2);
  nonbinary.data = {0.0f, 0.5f, 1.0f, 0.0f};
  std::map<std::string, Tensor> masks{{"haemorrhage", nonbinary}};
  CHECK_THROWS_AS(unetkit::findings_from_masks(masks, 0.01, 0), unetkit::ValueError);

  std::map<std::string, Tensor> empty;
  CHECK_THROWS_AS(unetkit::findings_from_masks(empty, 1.5, 0), unetkit::ValueError);
  CHECK_THROWS_AS(unetkit::findings_from_masks(empty, 0.01, 5), unetkit::ValueError);
}

TEST_CASE("report text carries urgency, lesion lines and fractions") {
  Findings f = make_findings(2);
  f.states[3] = LesionState::Present;
  f.fractions[3] = 0.025;
  auto r = unetkit::compose_report(f);
  CHECK(r.text.find("soon") != std::string::npos);
  CHECK(r.text.find("microaneurysm") != std::string::npos);
  CHECK(r.text.find("0.025") != std::string::npos);
  CHECK(r.text.find("mask missing") == std::string::npos);

  Findings g = make_findings(0, LesionState::Unknown);
  auto r2 = unetkit::compose_report(g);
  CHECK(r2.text.find("mask missing") != std::string::npos);
}

TEST_CASE("templates replace phrases and reject unknown keys") {
  refops::TempDir tmp("tmpl");
  const std::string path = (tmp.path() / "phrases.txt").string();
  {
    std::ofstream out(path);
    out << "# comment line\n";
    out << "grade.2=CUSTOM GRADE TWO PHRASE.\n";
    out << "lesion.haemorrhage=CUSTOM HAEM PHRASE.\n";
  }
  auto t = unetkit::load_templates(path);
  Findings f = make_findings(2);
  f.states[1] = LesionState::Present;
  f.fractions[1] = 0.5;
  auto r = unetkit::compose_report(f, t);
  CHECK(r.recommendation.find("CUSTOM GRADE TWO PHRASE.") != std::string::npos);
  CHECK(r.recommendation.find("CUSTOM HAEM PHRASE.") != std::string::npos);

  const std::string bad = (tmp.path() / "bad.txt").string();
  std::ofstream(bad) << "grade.9=nope\n";
  CHECK_THROWS_AS(unetkit::load_templates(bad), unetkit::ConfigError);
  CHECK_THROWS_AS(unetkit::load_templates((tmp.path() / "missing.txt").string()),
                  unetkit::IoError);
}

namespace {

struct EchoClient final : unetkit::TextClient {
  std::string last_prompt;
  std::string complete(const std::string& prompt) override {
    last_prompt = prompt;
    return "ENRICHED SUMMARY";
  }
};

struct FailingClient final : unetkit::TextClient {
  std::string complete(const std::string&) override {
    throw unetkit::IoError("connection refused");
  }
};

struct EmptyClient final : unetkit::TextClient {
  std::string complete(const std::string&) override { return "   "; }
};

}  // namespace

TEST_CASE("enrichment appends prose without touching the structured content") {
  Findings f = make_findings(3);
  f.states[1] = LesionState::Present;
  f.fractions[1] = 0.04;
  auto base = unetkit::compose_report(f);

  EchoClient client;
  auto enriched = unetkit::enrich_via_external(f, base, &client);
  CHECK(enriched.urgency == base.urgency);
  CHECK(enriched.block == base.block);
  CHECK(enriched.text.find("ENRICHED SUMMARY") != std::string::npos);
  CHECK(enriched.text.find(base.recommendation) != std::string::npos);
  CHECK(unetkit::parse_findings_block(enriched.text) == f);

  // The prompt must describe the case: grade label and every lesion name.
  CHECK(client.last_prompt.find(unetkit::grade_label(3)) != std::string::npos);
  for (const char* name : unetkit::kLesionNames) {
    CHECK(client.last_prompt.find(name) != std::string::npos);
  }
}

TEST_CASE("enrichment failure falls back to the base report with a note") {
  Findings f = make_findings(1);
  auto base = unetkit::compose_report(f);
  FailingClient bad;
  auto r = unetkit::enrich_via_external(f, base, &bad);
  CHECK(r.urgency == base.urgency);
  CHECK(r.block == base.block);
  CHECK(r.text.find("external enrichment unavailable") != std::string::npos);

  EmptyClient empty;
  auto r2 = unetkit::enrich_via_external(f, base, &empty);
  CHECK(r2.text.find("external enrichment empty") != std::string::npos);

  auto r3 = unetkit::enrich_via_external(f, base, nullptr);
  CHECK(r3.text == base.text);
}

TEST_CASE("grade labels cover the five grades") {
  CHECK(std::string(unetkit::grade_label(0)).find("no diabetic retinopathy") !=
        std::string::npos);
  CHECK(std::string(unetkit::grade_label(4)).find("proliferative") != std::string::npos);
}
