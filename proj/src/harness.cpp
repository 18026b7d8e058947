#include "ruleprompt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "published_metrics.hpp"
#include "ruleprompt/error.hpp"

namespace ruleprompt {

using nlohmann::json;

std::string_view to_string(RunParadigm paradigm) {
  switch (paradigm) {
    case RunParadigm::ZeroShot: return "zero";
    case RunParadigm::FewShot: return "few";
    case RunParadigm::ICL: return "icl";
    case RunParadigm::Hybrid: return "hybrid";
  }
  return "?";
}

RunParadigm run_paradigm_from_string(std::string_view text) {
  if (text == "hybrid") return RunParadigm::Hybrid;
  switch (prompt_paradigm_from_string(text)) {
    case PromptParadigm::ZeroShot: return RunParadigm::ZeroShot;
    case PromptParadigm::FewShot: return RunParadigm::FewShot;
    case PromptParadigm::ICL: return RunParadigm::ICL;
  }
  return RunParadigm::ZeroShot;
}

std::string_view to_string(ResponderKind kind) { return kind == ResponderKind::Endpoint ? "endpoint" : "simulated"; }

ResponderKind responder_kind_from_string(std::string_view text) {
  if (text == "simulated") return ResponderKind::Simulated;
  if (text == "endpoint") return ResponderKind::Endpoint;
  throw Error(ErrorKind::ConfigError, fmt::format("unknown responder '{}' (expected simulated|endpoint)", text));
}

void RunConfig::validate() const {
  if (concurrency == 0) throw Error(ErrorKind::ConfigError, "concurrency must be at least 1");
  if (responder == ResponderKind::Endpoint) endpoint.validate();
  if (responder == ResponderKind::Simulated) simulated.validate();
  if (hybrid) hybrid->validate();
  if (paradigm == RunParadigm::Hybrid && model_path.empty()) {
    throw Error(ErrorKind::ModelMissing, "the hybrid paradigm needs a trained detector (model path)");
  }
}

json config_to_json(const RunConfig& cfg) {
  json j = {
      {"name", cfg.name},
      {"dataset_path", cfg.dataset_path.string()},
      {"paradigm", to_string(cfg.paradigm)},
      {"style", to_string(cfg.format.style)},
      {"decimals",
       {{"value", cfg.format.value_decimals}, {"stat", cfg.format.stat_decimals}, {"abs_z", cfg.format.z_decimals}}},
      {"responder", to_string(cfg.responder)},
      {"concurrency", cfg.concurrency},
      {"seed", cfg.seed},
      {"template_dir", cfg.template_dir ? cfg.template_dir->string() : ""},
  };
  if (cfg.responder == ResponderKind::Endpoint) {
    j["endpoint"] = {{"base_url", cfg.endpoint.base_url},
                     {"model", cfg.endpoint.model_name},
                     {"timeout", cfg.endpoint.timeout_seconds},
                     {"max_retries", cfg.endpoint.max_retries},
                     {"temperature", cfg.endpoint.temperature},
                     {"adapted", cfg.endpoint_adapted}};
  } else {
    j["simulated"] = {{"fidelity", cfg.simulated.fidelity},
                      {"verbosity", to_string(cfg.simulated.verbosity)},
                      {"seed", cfg.simulated.seed}};
  }
  if (cfg.paradigm == RunParadigm::Hybrid) {
    j["model_path"] = cfg.model_path.string();
    if (cfg.hybrid) {
      j["hybrid"] = {{"filter_threshold", cfg.hybrid->filter_threshold},
                     {"max_selected", cfg.hybrid->max_selected},
                     {"decision_threshold", cfg.hybrid->decision_threshold}};
    }
  }
  return j;
}

double f1_score(double precision, double recall) noexcept {
  const double denom = precision + recall;
  return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

Metrics compute_metrics(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  if (total == 0) throw Error(ErrorKind::EmptyRun, "no evaluated samples");
  const auto d = [](std::size_t v) { return static_cast<double>(v); };
  Metrics m;
  m.accuracy = d(cm.tp + cm.tn) / d(total);
  m.recall = cm.tp + cm.fn > 0 ? d(cm.tp) / d(cm.tp + cm.fn) : 0.0;
  m.precision = cm.tp + cm.fp > 0 ? d(cm.tp) / d(cm.tp + cm.fp) : 0.0;
  m.f1 = f1_score(m.precision, m.recall);
  m.unparseable_rate = d(cm.unparseable) / d(total);
  return m;
}

ConfusionMatrix confusion_from_records(std::span<const SampleRecord> records) {
  ConfusionMatrix cm;
  for (const auto& r : records) {
    if (!r.predicted) {
      ++cm.unparseable;
    } else if (*r.predicted == Label::Anomaly) {
      ++(r.truth == Label::Anomaly ? cm.tp : cm.fp);
    } else {
      ++(r.truth == Label::Anomaly ? cm.fn : cm.tn);
    }
  }
  return cm;
}

void aggregate(RunResult& result) {
  result.confusion = confusion_from_records(result.records);
  result.metrics = compute_metrics(result.confusion);

  double token_sum = 0.0;
  result.token_stats = {};
  for (const auto& r : result.records) {
    token_sum += static_cast<double>(r.prompt_tokens);
    result.token_stats.max = std::max(result.token_stats.max, r.prompt_tokens);
  }
  result.token_stats.mean = token_sum / static_cast<double>(result.records.size());

  AdherenceSummary a;
  double matches = 0.0;
  double valid = 0.0;
  double complete = 0.0;
  for (const auto& r : result.records) {
    if (!r.adherence) continue;
    ++a.parsed;
    matches += r.adherence->label_matches_rule ? 1.0 : 0.0;
    valid += r.adherence->citations_valid;
    complete += r.adherence->citations_complete;
  }
  if (a.parsed > 0) {
    const double n = static_cast<double>(a.parsed);
    a.label_match_rate = matches / n;
    a.mean_citations_valid = valid / n;
    a.mean_citations_complete = complete / n;
  }
  result.adherence = a;
}

std::string RunResult::dataset_hash() const {
  if (auto it = manifest.find("dataset_hash"); it != manifest.end() && it->is_string()) return it->get<std::string>();
  return {};
}

std::string RunResult::name() const {
  if (auto it = manifest.find("name"); it != manifest.end() && it->is_string()) return it->get<std::string>();
  return {};
}

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string default_run_name(const RunConfig& cfg) {
  if (!cfg.name.empty()) return cfg.name;
  return fmt::format("{}/{}", to_string(cfg.paradigm), to_string(cfg.format.style));
}

struct WorkerFailure {
  std::size_t index = 0;
  ErrorKind kind = ErrorKind::EndpointUnavailable;
  std::string message;
};

class RunExecutor {
 public:
  RunExecutor(const RunConfig& cfg, const DatasetSplit& dataset, const DetectorBundle* detector)
      : cfg_(cfg), dataset_(dataset), detector_(detector), metas_(make_sensor_set(dataset.sensor_count())) {
    modules_ = cfg.template_dir ? load_modules(*cfg.template_dir, dataset.rule) : default_modules(dataset.rule);
    simulated_ = cfg.simulated;
    simulated_.rule = dataset.rule;

    PromptParadigm prompt_paradigm = PromptParadigm::ZeroShot;
    if (cfg.paradigm == RunParadigm::FewShot) prompt_paradigm = PromptParadigm::FewShot;
    if (cfg.paradigm == RunParadigm::ICL) prompt_paradigm = PromptParadigm::ICL;
    RandomStream rng(mix_seed(cfg.seed, 0xE8E5));
    exemplars_ = attach_exemplars(dataset, prompt_paradigm, cfg.format, rng);

    if (cfg.paradigm == RunParadigm::Hybrid) {
      if (detector_ == nullptr) throw Error(ErrorKind::ModelMissing, "the hybrid paradigm needs a trained detector");
      if (detector_->mode != FeatureMode::RuleFiltered) {
        throw Error(ErrorKind::ConfigError,
                    "the detector was trained on all-sensor features; train it with filtered features for hybrid runs");
      }
      hybrid_ = cfg.hybrid ? *cfg.hybrid : detector_->hybrid;
    }
  }

  std::vector<SampleRecord> run() {
    const auto& samples = dataset_.test;
    std::vector<SampleRecord> records(samples.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};

    auto worker = [&] {
      while (!abort.load()) {
        const std::size_t i = next.fetch_add(1);
        if (i >= samples.size()) return;
        try {
          records[i] = evaluate_sample(i, samples[i]);
        } catch (const Error& e) {
          fail(i, e.kind(), e.what());
          abort = true;
        } catch (const std::exception& e) {
          fail(i, ErrorKind::EndpointUnavailable, e.what());
          abort = true;
        }
      }
    };

    const std::size_t threads = std::min(cfg_.concurrency, std::max<std::size_t>(1, samples.size()));
    if (threads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      pool.reserve(threads);
      for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }

    if (failure_) {
      throw Error(failure_->kind, fmt::format("test sample {}: {}", failure_->index, failure_->message));
    }
    return records;
  }

 private:
  SampleRecord evaluate_sample(std::size_t index, const LabeledSample& sample) {
    SampleRecord rec;
    rec.index = index;
    rec.truth = sample.label;

    const ZScoreVector z = normalize(sample.snapshot, dataset_.stats, dataset_.rule);
    const std::string block = render_value_block(sample.snapshot, dataset_.stats, z, cfg_.format, metas_);
    const RenderedPrompt prompt = compose_prompt(modules_, exemplars_, block);

    ChatExchange ex;
    if (cfg_.responder == ResponderKind::Simulated) {
      ex = simulate_response(simulated_, prompt, index);
    } else {
      ex = send_chat(cfg_.endpoint, prompt);
      if (!ex.ok()) {
        throw Error(ErrorKind::EndpointUnavailable,
                    fmt::format("{} after {} attempt(s): {}", to_string(ex.status), ex.attempts, ex.error_message));
      }
    }
    rec.prompt_tokens = prompt.token_count;
    rec.latency_seconds = ex.latency_seconds;
    rec.reply = ex.reply_text;

    const ParseOutcome outcome = parse_response(ex.reply_text);
    rec.parse_status = outcome.status;
    const ParsedVerdict* verdict = outcome.ok() ? &*outcome.verdict : nullptr;
    if (verdict) {
      rec.predicted = verdict->label;
      rec.cited_ids = verdict->cited_sensor_ids;
      rec.adherence = check_rule_adherence(*verdict, z, dataset_.rule);
    }

    if (cfg_.paradigm == RunParadigm::Hybrid) {
      const HybridPrediction hp = hybrid_predict(z, detector_->model, hybrid_, verdict);
      rec.predicted = hp.label;
      rec.detector_probability = hp.probability;
      rec.selected_ids = hp.selected_ids;
    }
    return rec;
  }

  void fail(std::size_t index, ErrorKind kind, std::string message) {
    std::lock_guard lock(failure_mutex_);
    if (!failure_ || index < failure_->index) failure_ = WorkerFailure{index, kind, std::move(message)};
  }

  const RunConfig& cfg_;
  const DatasetSplit& dataset_;
  const DetectorBundle* detector_;
  std::vector<SensorMeta> metas_;
  PromptModules modules_;
  SimulatedResponderConfig simulated_;
  std::vector<Exemplar> exemplars_;
  HybridConfig hybrid_;
  std::mutex failure_mutex_;
  std::optional<WorkerFailure> failure_;
};

}  // namespace

RunResult evaluate_run(const RunConfig& cfg, const DatasetSplit& dataset, const DetectorBundle* detector) {
  cfg.validate();
  if (dataset.test.empty()) throw Error(ErrorKind::EmptyRun, "the dataset's test split is empty");

  RunResult result;
  result.manifest = {
      {"name", default_run_name(cfg)},
      {"paradigm", cfg.endpoint_adapted && cfg.responder == ResponderKind::Endpoint ? "endpoint-adapted"
                                                                                    : std::string(to_string(cfg.paradigm))},
      {"config", config_to_json(cfg)},
      {"dataset_hash", dataset_hash(dataset)},
      {"dataset_seed", dataset.manifest.seed},
      {"sample_count", dataset.test.size()},
  };
  const std::string started = utc_timestamp();

  RunExecutor executor(cfg, dataset, detector);
  result.records = executor.run();
  aggregate(result);

  result.manifest["timestamps"] = {{"started_at", started}, {"finished_at", utc_timestamp()}};
  return result;
}

RunResult evaluate_run(const RunConfig& cfg) {
  cfg.validate();
  DatasetSplit dataset;
  try {
    dataset = read_dataset(cfg.dataset_path);
  } catch (const Error& e) {
    throw Error(ErrorKind::DatasetError, e.what());
  }
  std::optional<DetectorBundle> detector;
  if (cfg.paradigm == RunParadigm::Hybrid) detector = read_model(cfg.model_path);
  return evaluate_run(cfg, dataset, detector ? &*detector : nullptr);
}

DetectorEvaluation evaluate_detector(const DatasetSplit& dataset, std::span<const LabeledSample> samples,
                                     const DetectorBundle& detector) {
  std::vector<SampleRecord> records;
  records.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ZScoreVector z = normalize(samples[i].snapshot, dataset.stats, dataset.rule);
    const FeatureVector f = features_for(z, detector.mode, detector.hybrid, nullptr);
    SampleRecord r;
    r.index = i;
    r.truth = samples[i].label;
    r.predicted = predict(detector.model, f, detector.hybrid.decision_threshold).label;
    records.push_back(std::move(r));
  }
  DetectorEvaluation out;
  out.confusion = confusion_from_records(records);
  out.metrics = compute_metrics(out.confusion);
  return out;
}

ComparisonTable compare_runs(std::span<const RunResult> results) {
  if (results.size() < 2) throw Error(ErrorKind::InvalidArgument, "comparison needs at least two runs");
  ComparisonTable table;
  table.dataset_hash = results.front().dataset_hash();
  for (const auto& r : results) {
    if (r.dataset_hash() != table.dataset_hash) {
      throw Error(ErrorKind::DatasetMismatch, fmt::format("run '{}' used dataset {} but '{}' used {}", r.name(),
                                                          r.dataset_hash(), results.front().name(),
                                                          table.dataset_hash));
    }
    table.rows.push_back({r.name(), r.metrics, r.token_stats.mean});
  }
  return table;
}

std::string render_comparison(const ComparisonTable& table) {
  std::string out = fmt::format("dataset {}\n", table.dataset_hash);
  out += fmt::format("| {:<24} | {:>8} | {:>8} | {:>9} | {:>8} | {:>11} |\n", "run", "accuracy", "recall",
                     "precision", "f1", "mean tokens");
  out += fmt::format("|{:-<26}|{:->10}|{:->10}|{:->11}|{:->10}|{:->13}|\n", "", "", "", "", "", "");
  for (const auto& row : table.rows) {
    out += fmt::format("| {:<24} | {:>8.3f} | {:>8.3f} | {:>9.3f} | {:>8.3f} | {:>11.1f} |\n", row.name,
                       row.metrics.accuracy, row.metrics.recall, row.metrics.precision, row.metrics.f1,
                       row.mean_tokens);
  }
  return out;
}

PublishedFixtures published_fixtures() {
  const json doc = json::parse(detail::kPublishedMetricsJson);
  PublishedFixtures fx;
  fx.version = doc.at("version").get<int>();
  fx.tolerance = doc.at("tolerance_pp").get<double>();
  for (const auto& row : doc.at("rows")) {
    fx.rows.push_back({row.at("group").get<std::string>(), row.at("name").get<std::string>(),
                       row.at("accuracy").get<double>(), row.at("recall").get<double>(),
                       row.at("precision").get<double>(), row.at("f1").get<double>()});
  }
  return fx;
}

bool ConsistencyReport::all_pass() const noexcept {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.pass; });
}

ConsistencyReport verify_paper_consistency() {
  const PublishedFixtures fx = published_fixtures();
  ConsistencyReport report;
  report.tolerance = fx.tolerance;
  for (const auto& row : fx.rows) {
    ConsistencyRow c;
    c.published = row;
    c.recomputed_f1 = f1_score(row.precision, row.recall);
    c.delta = c.recomputed_f1 - row.f1;
    // Balanced 100/100 split: TP = recall, FP = TP / precision - TP, in percent units.
    const double tp = row.recall;
    const double fp = row.precision > 0.0 ? tp / (row.precision / 100.0) - tp : 0.0;
    c.implied_accuracy = (tp + (100.0 - fp)) / 2.0;
    c.pass = std::abs(c.delta) <= fx.tolerance + 1e-12;
    report.rows.push_back(c);
  }
  return report;
}

std::string render_consistency(const ConsistencyReport& report) {
  std::string out = fmt::format("F1 consistency (tolerance +/-{:.2f} pp)\n", report.tolerance);
  for (const auto& r : report.rows) {
    out += fmt::format("{:<4} {:<10} {:<12} P={:>5.1f} R={:>5.1f} F1 reported={:>5.1f} recomputed={:>7.3f} "
                       "delta={:>+6.3f}  implied acc={:>6.2f} (reported {:.1f})\n",
                       r.pass ? "PASS" : "FAIL", r.published.group, r.published.name, r.published.precision,
                       r.published.recall, r.published.f1, r.recomputed_f1, r.delta, r.implied_accuracy,
                       r.published.accuracy);
  }
  out += report.all_pass() ? "all rows consistent\n" : "inconsistent rows found\n";
  return out;
}

namespace {

json adherence_json(const AdherenceReport& a) {
  return {{"label_matches_rule", a.label_matches_rule},
          {"citations_valid", a.citations_valid},
          {"citations_complete", a.citations_complete}};
}

json record_json(const SampleRecord& r) {
  json j = {
      {"index", r.index},
      {"truth", to_string(r.truth)},
      {"predicted", r.predicted ? json(to_string(*r.predicted)) : json(nullptr)},
      {"parse_status", to_string(r.parse_status)},
      {"prompt_tokens", r.prompt_tokens},
      {"latency", r.latency_seconds},
      {"adherence", r.adherence ? adherence_json(*r.adherence) : json(nullptr)},
      {"cited", r.cited_ids},
      {"detector_probability", r.detector_probability ? json(*r.detector_probability) : json(nullptr)},
      {"selected", r.selected_ids},
      {"reply", r.reply},
  };
  return j;
}

Label label_from_json(const json& j) {
  if (auto l = label_from_string(j.get<std::string>())) return *l;
  throw Error(ErrorKind::FormatError, fmt::format("unknown label {}", j.dump()));
}

ParseStatus parse_status_from(std::string_view s) {
  if (s == "ok") return ParseStatus::Ok;
  if (s == "missing_label") return ParseStatus::MissingLabel;
  if (s == "empty_reply") return ParseStatus::EmptyReply;
  throw Error(ErrorKind::FormatError, fmt::format("unknown parse status '{}'", s));
}

SampleRecord record_from_json(const json& j) {
  SampleRecord r;
  r.index = j.at("index").get<std::size_t>();
  r.truth = label_from_json(j.at("truth"));
  if (!j.at("predicted").is_null()) r.predicted = label_from_json(j.at("predicted"));
  r.parse_status = parse_status_from(j.at("parse_status").get<std::string>());
  r.prompt_tokens = j.at("prompt_tokens").get<std::size_t>();
  r.latency_seconds = j.at("latency").get<double>();
  if (const auto& a = j.at("adherence"); !a.is_null()) {
    r.adherence = AdherenceReport{a.at("label_matches_rule").get<bool>(), a.at("citations_valid").get<double>(),
                                  a.at("citations_complete").get<double>()};
  }
  r.cited_ids = j.at("cited").get<std::vector<SensorId>>();
  if (const auto& p = j.at("detector_probability"); !p.is_null()) r.detector_probability = p.get<double>();
  r.selected_ids = j.at("selected").get<std::vector<SensorId>>();
  r.reply = j.at("reply").get<std::string>();
  return r;
}

json confusion_json(const ConfusionMatrix& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}, {"unparseable", c.unparseable}};
}

json metrics_json(const Metrics& m) {
  return {{"accuracy", m.accuracy},
          {"recall", m.recall},
          {"precision", m.precision},
          {"f1", m.f1},
          {"unparseable_rate", m.unparseable_rate}};
}

json token_json(const TokenStats& t) { return {{"mean", t.mean}, {"max", t.max}}; }

json adherence_summary_json(const AdherenceSummary& a) {
  return {{"parsed", a.parsed},
          {"label_match_rate", a.label_match_rate},
          {"mean_citations_valid", a.mean_citations_valid},
          {"mean_citations_complete", a.mean_citations_complete}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, fmt::format("cannot open '{}' for writing", path.string()));
  out << text;
  if (!out) throw Error(ErrorKind::IoError, fmt::format("write to '{}' failed", path.string()));
}

}  // namespace

std::string json_summary(const RunResult& result) {
  if (result.records.empty()) throw Error(ErrorKind::EmptyRun, "run has no sample records");
  json doc = {
      {"manifest", result.manifest},
      {"confusion", confusion_json(result.confusion)},
      {"metrics", metrics_json(result.metrics)},
      {"token_stats", token_json(result.token_stats)},
      {"adherence", adherence_summary_json(result.adherence)},
  };
  return doc.dump(2) + "\n";
}

std::string csv_per_sample(const RunResult& result) {
  if (result.records.empty()) throw Error(ErrorKind::EmptyRun, "run has no sample records");
  std::string out = "index,truth,predicted,tokens,latency,label_matches_rule\n";
  for (const auto& r : result.records) {
    out += fmt::format("{},{},{},{},{:.6f},{}\n", r.index, to_string(r.truth),
                       r.predicted ? to_string(*r.predicted) : std::string_view("unparseable"), r.prompt_tokens,
                       r.latency_seconds,
                       r.adherence ? (r.adherence->label_matches_rule ? "true" : "false") : "");
  }
  return out;
}

Metrics metrics_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line.rfind("index,truth,predicted", 0) != 0) {
    throw Error(ErrorKind::FormatError, "per-sample CSV lacks its header row");
  }
  std::vector<SampleRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() < 3) throw Error(ErrorKind::FormatError, fmt::format("short CSV row '{}'", line));
    SampleRecord r;
    r.truth = label_from_json(json(cells[1]));
    if (cells[2] != "unparseable") r.predicted = label_from_json(json(cells[2]));
    records.push_back(std::move(r));
  }
  return compute_metrics(confusion_from_records(records));
}

void emit_report(const RunResult& result, ReportFormat format, const std::filesystem::path& path) {
  // Render first so an empty run fails before anything touches the filesystem.
  const std::string text = format == ReportFormat::JsonSummary ? json_summary(result) : csv_per_sample(result);
  write_text(path, text);
}

std::string serialize_run_result(const RunResult& result) {
  json records = json::array();
  for (const auto& r : result.records) records.push_back(record_json(r));
  json doc = {
      {"schema_version", 1},
      {"manifest", result.manifest},
      {"confusion", confusion_json(result.confusion)},
      {"metrics", metrics_json(result.metrics)},
      {"token_stats", token_json(result.token_stats)},
      {"adherence", adherence_summary_json(result.adherence)},
      {"records", records},
  };
  return doc.dump(1) + "\n";
}

RunResult parse_run_result(const std::string& text) {
  RunResult result;
  ConfusionMatrix stored_cm;
  Metrics stored;
  try {
    const json doc = json::parse(text);
    if (doc.at("schema_version").get<int>() != 1) throw Error(ErrorKind::FormatError, "unsupported run result version");
    result.manifest = doc.at("manifest");
    for (const auto& r : doc.at("records")) result.records.push_back(record_from_json(r));
    const auto& c = doc.at("confusion");
    stored_cm = {c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(), c.at("fn").get<std::size_t>(),
                 c.at("tn").get<std::size_t>(), c.at("unparseable").get<std::size_t>()};
    const auto& m = doc.at("metrics");
    stored = {m.at("accuracy").get<double>(), m.at("recall").get<double>(), m.at("precision").get<double>(),
              m.at("f1").get<double>(), m.at("unparseable_rate").get<double>()};
  } catch (const json::exception& e) {
    throw Error(ErrorKind::FormatError, fmt::format("malformed run result: {}", e.what()));
  }
  aggregate(result);
  if (result.confusion != stored_cm || result.metrics != stored) {
    throw Error(ErrorKind::FormatError, "stored metrics disagree with the per-sample records");
  }
  return result;
}

void write_run_result(const RunResult& result, const std::filesystem::path& path) {
  write_text(path, serialize_run_result(result));
}

RunResult read_run_result(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, fmt::format("cannot open '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_result(buf.str());
}

}  // namespace ruleprompt
