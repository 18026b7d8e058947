#include <doctest.h>

#include "ruleprompt/llm_gateway.hpp"
#include "ruleprompt/promptkit.hpp"
#include "ruleprompt/schema_parser.hpp"
#include "support.hpp"

using namespace ruleprompt;

namespace {

ZScoreVector z_with(std::size_t n, std::initializer_list<std::pair<SensorId, double>> hot) {
  ZScoreVector z;
  z.abs_z.assign(n, 0.5);
  for (auto [id, v] : hot) z.abs_z[id] = v;
  return z;
}

}  // namespace

TEST_CASE("parse_response examples") {
  const auto a = parse_response("anomaly\nSensor 255: abs_z = 3.5 exceeds 3.0");
  REQUIRE(a.ok());
  CHECK(a.verdict->label == Label::Anomaly);
  CHECK(a.verdict->cited_sensor_ids == std::vector<SensorId>{254});
  CHECK(a.verdict->explanation == "Sensor 255: abs_z = 3.5 exceeds 3.0");

  const auto n = parse_response("Normal");
  REQUIRE(n.ok());
  CHECK(n.verdict->label == Label::Nominal);
  CHECK(n.verdict->explanation.empty());
  CHECK(n.verdict->cited_sensor_ids.empty());

  CHECK(parse_response("").status == ParseStatus::EmptyReply);
  CHECK(parse_response("  \n\t ").status == ParseStatus::EmptyReply);
  CHECK(parse_response("I cannot tell.").status == ParseStatus::MissingLabel);

  const auto adversarial = parse_response("The reading looks abnormal but within normal variation; verdict: anomaly");
  REQUIRE(adversarial.ok());
  CHECK(adversarial.verdict->label == Label::Nominal);
}

TEST_CASE("parse_response: synonyms, emphasis and whitespace") {
  CHECK(parse_response("Anomalous").verdict->label == Label::Anomaly);
  CHECK(parse_response("**ANOMALY**").verdict->label == Label::Anomaly);
  CHECK(parse_response("`normal`").verdict->label == Label::Nominal);
  CHECK(parse_response("\n\n   anomaly   \n").verdict->label == Label::Anomaly);
  CHECK(parse_response("abnormal").status == ParseStatus::MissingLabel);
  CHECK(parse_response("anomalyx normalcy").status == ParseStatus::MissingLabel);
  CHECK(parse_response("Label: anomaly").verdict->label == Label::Anomaly);
}

TEST_CASE("property: parse_response is total") {
  RandomStream rng(3);
  const std::vector<std::string> pieces{"normal", "anomaly", "anomalous", "abnormal", "Sensor 12", " ", "\n", "*",
                                        "`",      "x",       "NORMAL",    "3.5",      ":",         "\t"};
  for (int trial = 0; trial < 3000; ++trial) {
    std::string s;
    const std::size_t k = rng.uniform_index(8);
    for (std::size_t i = 0; i < k; ++i) s += pieces[rng.uniform_index(pieces.size())];
    const ParseOutcome out = parse_response(s);
    REQUIRE(out.ok() == out.verdict.has_value());
    if (out.ok()) REQUIRE(out.verdict->raw_reply == s);
  }
}

TEST_CASE("extract_sensor_citations") {
  CHECK(extract_sensor_citations("Sensor 7 and sensor 3, then Sensor 7 again") == std::vector<SensorId>{2, 6});
  CHECK(extract_sensor_citations("Sensor 0 is not a display name").empty());
  CHECK(extract_sensor_citations("Sensors 4").empty());
}

TEST_CASE("check_rule_adherence examples") {
  const RuleConfig rule;
  const ZScoreVector hot = z_with(255, {{254, 3.5}});
  const auto perfect = parse_response("anomaly\nSensor 255: abs_z = 3.5 exceeds 3.0");
  CHECK(check_rule_adherence(*perfect.verdict, hot, rule) == AdherenceReport{true, 1.0, 1.0});

  const auto wrong_cite = parse_response("anomaly\nSensor 255 and Sensor 1");
  const AdherenceReport r = check_rule_adherence(*wrong_cite.verdict, hot, rule);
  CHECK(r.label_matches_rule);
  CHECK(r.citations_valid == doctest::Approx(0.5));
  CHECK(r.citations_complete == 1.0);

  const ZScoreVector calm = z_with(255, {});
  const auto nominal = parse_response("normal");
  CHECK(check_rule_adherence(*nominal.verdict, calm, rule) == AdherenceReport{true, 1.0, 1.0});

  const auto missed = parse_response("normal");
  CHECK_FALSE(check_rule_adherence(*missed.verdict, hot, rule).label_matches_rule);
  CHECK(check_rule_adherence(*missed.verdict, hot, rule).citations_complete == 0.0);
}

TEST_CASE("round trip with the fidelity-1.0 simulated responder") {
  const DatasetSplit& d = rptest::default_dataset();
  const auto metas = make_sensor_set(d.sensor_count());
  const PromptModules modules = default_modules(d.rule);
  SimulatedResponderConfig sim{d.rule, 1.0, ResponderVerbosity::LabelPlusExplanation, 17};
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    const auto& s = d.test[i];
    const ZScoreVector z = normalize(s.snapshot, d.stats, d.rule);
    const auto prompt = compose_prompt(modules, {}, render_value_block(s.snapshot, d.stats, z, {}, metas));
    const ParseOutcome out = parse_response(simulate_response(sim, prompt, i).reply_text);
    REQUIRE(out.ok());
    REQUIRE(check_rule_adherence(*out.verdict, z, d.rule) == AdherenceReport{true, 1.0, 1.0});
  }
}
