#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ruleprompt/datagen.hpp"
#include "ruleprompt/detector.hpp"
#include "ruleprompt/error.hpp"
#include "ruleprompt/harness.hpp"
#include "ruleprompt/promptkit.hpp"

namespace ruleprompt::cli {

namespace fs = std::filesystem;

namespace {

struct GenOptions {
  std::uint64_t seed = 42;
  std::size_t sensors = 255;
  std::string out;
  double deviation = 0.15;
  std::size_t k = 3;
  std::string sign = "random";
  double tau = 3.0;
  double epsilon = 1e-9;
  std::size_t train_per_class = 600;
  std::size_t validation_per_class = 100;
  std::size_t test_per_class = 100;
  std::size_t pool = 2000;
  std::size_t attempt_factor = 100;
};

struct PromptOptions {
  std::string dataset;
  std::size_t index = 0;
  std::string style = "zscore";
  std::string paradigm = "zero";
  std::uint64_t seed = 0;
  std::string templates;
  int z_decimals = 1;
};

struct RunOptions {
  std::string name;
  std::string dataset;
  std::string paradigm = "zero";
  std::string style = "zscore";
  std::string responder = "simulated";
  double fidelity = 1.0;
  std::string verbosity = "explain";
  std::uint64_t responder_seed = 0;
  std::uint64_t seed = 0;
  std::size_t concurrency = 4;
  std::string base_url = "http://127.0.0.1:8000";
  std::string model_name = "gpt-oss-20b";
  double timeout = 120.0;
  int retries = 2;
  double backoff = 0.5;
  double temperature = 0.0;
  bool adapted = false;
  std::string model;
  std::optional<double> filter_threshold;
  std::optional<std::size_t> max_selected;
  std::optional<double> decision_threshold;
  std::string templates;
  std::string out = "run_out";
};

struct TrainOptions {
  std::string dataset;
  std::string out;
  std::string features = "filtered";
  double lr = 0.1;
  std::size_t epochs = 10000;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
  double filter_threshold = 2.5;
  std::size_t max_selected = 16;
  double decision_threshold = 0.5;
};

struct CompareOptions {
  std::vector<std::string> results;
  std::string out;
};

struct ReportOptions {
  std::string result;
  std::string format = "json";
  std::string out;
};

struct Options {
  GenOptions gen;
  PromptOptions prompt;
  RunOptions run;
  TrainOptions train;
  CompareOptions compare;
  ReportOptions report;
};

struct Subcommands {
  CLI::App* gen = nullptr;
  CLI::App* prompt = nullptr;
  CLI::App* run = nullptr;
  CLI::App* train = nullptr;
  CLI::App* compare = nullptr;
  CLI::App* check = nullptr;
  CLI::App* report = nullptr;
};

Subcommands build_app(CLI::App& app, Options& o) {
  app.require_subcommand(1);
  app.set_config("--config", "", "INI/TOML file with flag values; command-line flags take precedence");

  Subcommands s;
  s.gen = app.add_subcommand("gen", "Generate a rule-labeled synthetic telemetry dataset");
  s.gen->add_option("--seed", o.gen.seed, "Generator seed")->capture_default_str();
  s.gen->add_option("--sensors", o.gen.sensors, "Sensors per snapshot")->capture_default_str();
  s.gen->add_option("--out", o.gen.out, "Output dataset file (JSON Lines)")->required();
  s.gen->add_option("--deviation", o.gen.deviation, "Injected relative deviation")->capture_default_str();
  s.gen->add_option("--k", o.gen.k, "Sensors perturbed per anomaly candidate")->capture_default_str();
  s.gen->add_option("--sign", o.gen.sign, "Deviation sign policy: random|up")->capture_default_str();
  s.gen->add_option("--tau", o.gen.tau, "Rule threshold on abs_z")->capture_default_str();
  s.gen->add_option("--epsilon", o.gen.epsilon, "Std floor in the z-score")->capture_default_str();
  s.gen->add_option("--train-per-class", o.gen.train_per_class, "Training samples per class")->capture_default_str();
  s.gen->add_option("--validation-per-class", o.gen.validation_per_class, "Validation samples per class")
      ->capture_default_str();
  s.gen->add_option("--test-per-class", o.gen.test_per_class, "Test samples per class")->capture_default_str();
  s.gen->add_option("--pool", o.gen.pool, "Nominal snapshots used to fit the statistics")->capture_default_str();
  s.gen->add_option("--attempt-factor", o.gen.attempt_factor, "Rejection-sampling cap as a multiple of each quota")
      ->capture_default_str();

  s.prompt = app.add_subcommand("prompt", "Print the composed prompt for one test sample");
  s.prompt->add_option("--dataset", o.prompt.dataset, "Dataset file")->required();
  s.prompt->add_option("--index", o.prompt.index, "Test-split sample index")->capture_default_str();
  s.prompt->add_option("--style", o.prompt.style, "Value block: value|meanstd|meanstdz|zscore")->capture_default_str();
  s.prompt->add_option("--paradigm", o.prompt.paradigm, "Exemplars: zero|few|icl")->capture_default_str();
  s.prompt->add_option("--seed", o.prompt.seed, "Exemplar selection seed")->capture_default_str();
  s.prompt->add_option("--templates", o.prompt.templates, "Directory with the five module templates");
  s.prompt->add_option("--z-decimals", o.prompt.z_decimals, "Displayed abs_z decimals")->capture_default_str();

  s.run = app.add_subcommand("run", "Evaluate a prompting paradigm over the test split");
  s.run->add_option("--name", o.run.name, "Run name used in reports and comparisons");
  s.run->add_option("--dataset", o.run.dataset, "Dataset file")->required();
  s.run->add_option("--paradigm", o.run.paradigm, "zero|few|icl|hybrid")->capture_default_str();
  s.run->add_option("--style", o.run.style, "Value block: value|meanstd|meanstdz|zscore")->capture_default_str();
  s.run->add_option("--responder", o.run.responder, "simulated|endpoint")->capture_default_str();
  s.run->add_option("--fidelity", o.run.fidelity, "Simulated responder: probability of the rule-correct label")
      ->capture_default_str();
  s.run->add_option("--verbosity", o.run.verbosity, "Simulated responder: label|explain")->capture_default_str();
  s.run->add_option("--responder-seed", o.run.responder_seed, "Simulated responder seed")->capture_default_str();
  s.run->add_option("--seed", o.run.seed, "Exemplar selection seed")->capture_default_str();
  s.run->add_option("--concurrency", o.run.concurrency, "In-flight responder calls")->capture_default_str();
  s.run->add_option("--base-url", o.run.base_url, "Endpoint base URL (POST <url>/v1/chat/completions)")
      ->capture_default_str();
  s.run->add_option("--model-name", o.run.model_name, "Endpoint model name")->capture_default_str();
  s.run->add_option("--timeout", o.run.timeout, "Endpoint timeout in seconds")->capture_default_str();
  s.run->add_option("--retries", o.run.retries, "Endpoint retries on timeout/5xx")->capture_default_str();
  s.run->add_option("--backoff", o.run.backoff, "Initial retry backoff in seconds")->capture_default_str();
  s.run->add_option("--temperature", o.run.temperature, "Endpoint sampling temperature")->capture_default_str();
  s.run->add_flag("--adapted", o.run.adapted, "Record the endpoint as serving an adapted model");
  s.run->add_option("--model", o.run.model, "Trained detector file (hybrid paradigm)");
  s.run->add_option("--filter-threshold", o.run.filter_threshold, "Hybrid: override the filter threshold");
  s.run->add_option("--max-selected", o.run.max_selected, "Hybrid: override the selection cap");
  s.run->add_option("--decision-threshold", o.run.decision_threshold, "Hybrid: override the probability threshold");
  s.run->add_option("--templates", o.run.templates, "Directory with the five module templates");
  s.run->add_option("--out", o.run.out, "Output directory for result.json, summary.json, per_sample.csv")
      ->capture_default_str();

  s.train = app.add_subcommand("train", "Fit the logistic detector on the training split");
  s.train->add_option("--dataset", o.train.dataset, "Dataset file")->required();
  s.train->add_option("--out", o.train.out, "Output model file")->required();
  s.train->add_option("--features", o.train.features, "all|filtered")->capture_default_str();
  s.train->add_option("--lr", o.train.lr, "Learning rate")->capture_default_str();
  s.train->add_option("--epochs", o.train.epochs, "Full-batch epochs")->capture_default_str();
  s.train->add_option("--l2", o.train.l2, "L2 penalty")->capture_default_str();
  s.train->add_option("--seed", o.train.seed, "Recorded training seed")->capture_default_str();
  s.train->add_option("--filter-threshold", o.train.filter_threshold, "Filter threshold for filtered features")
      ->capture_default_str();
  s.train->add_option("--max-selected", o.train.max_selected, "Selection cap for filtered features")
      ->capture_default_str();
  s.train->add_option("--decision-threshold", o.train.decision_threshold, "Probability threshold")
      ->capture_default_str();

  s.compare = app.add_subcommand("compare", "Tabulate saved run results over the same dataset");
  s.compare->add_option("--results", o.compare.results, "result.json files, in row order")->required();
  s.compare->add_option("--out", o.compare.out, "Also write the table to this file");

  s.check = app.add_subcommand("check", "Recompute F1 for the embedded published metric rows");

  s.report = app.add_subcommand("report", "Re-render a saved run result");
  s.report->add_option("--result", o.report.result, "result.json from a previous run")->required();
  s.report->add_option("--format", o.report.format, "json|csv")->capture_default_str();
  s.report->add_option("--out", o.report.out, "Output file (stdout when omitted)");
  return s;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigError:
    case ErrorKind::InvalidArgument:
    case ErrorKind::TooManySensors:
    case ErrorKind::EmptyModule:
    case ErrorKind::InsufficientExemplars:
    case ErrorKind::ModelMissing:
      return kExitConfig;
    case ErrorKind::EndpointUnavailable:
    case ErrorKind::UnparseableValueBlock:
      return kExitEndpoint;
    case ErrorKind::QuotaUnreachable:
    case ErrorKind::IoError:
    case ErrorKind::FormatError:
    case ErrorKind::DatasetError:
    case ErrorKind::DatasetMismatch:
      return kExitDataset;
    default:
      return kExitFailure;
  }
}

DatasetSplit load_dataset(const std::string& path) {
  try {
    return read_dataset(path);
  } catch (const Error& e) {
    throw Error(ErrorKind::DatasetError, e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, fmt::format("cannot open '{}' for writing", path.string()));
  out << text;
}

std::string metrics_line(const Metrics& m) {
  return fmt::format("accuracy {:.3f}  recall {:.3f}  precision {:.3f}  f1 {:.3f}  unparseable {:.3f}", m.accuracy,
                     m.recall, m.precision, m.f1, m.unparseable_rate);
}

int do_gen(const GenOptions& o, std::ostream& out) {
  const SyntheticModel model = make_default_model(o.sensors, o.seed);
  InjectionSpec spec{o.deviation, o.k, sign_policy_from_string(o.sign)};
  GenerationOptions gen;
  gen.quotas = {{o.train_per_class, o.train_per_class},
                {o.validation_per_class, o.validation_per_class},
                {o.test_per_class, o.test_per_class}};
  gen.nominal_pool_size = o.pool;
  gen.attempt_cap_factor = o.attempt_factor;
  const DatasetSplit split = generate_dataset(model, spec, gen, RuleConfig{o.tau, o.epsilon});
  write_dataset(split, o.out);
  const auto& m = split.manifest;
  out << fmt::format("wrote {} ({} sensors, seed {}, hash {})\n", o.out, m.sensor_count, m.seed,
                     dataset_hash(split));
  out << fmt::format("train {}/{}  validation {}/{}  test {}/{} (nominal/anomaly)\n", m.quotas.train.nominal,
                     m.quotas.train.anomaly, m.quotas.validation.nominal, m.quotas.validation.anomaly,
                     m.quotas.test.nominal, m.quotas.test.anomaly);
  out << fmt::format("rejected candidates: train {}/{}  validation {}/{}  test {}/{}\n", m.train_rejections.nominal,
                     m.train_rejections.anomaly, m.validation_rejections.nominal, m.validation_rejections.anomaly,
                     m.test_rejections.nominal, m.test_rejections.anomaly);
  return kExitOk;
}

int do_prompt(const PromptOptions& o, std::ostream& out) {
  const DatasetSplit dataset = load_dataset(o.dataset);
  if (o.index >= dataset.test.size()) {
    throw Error(ErrorKind::ConfigError,
                fmt::format("index {} is outside the test split ({} samples)", o.index, dataset.test.size()));
  }
  ValueBlockFormat format;
  format.style = value_block_style_from_string(o.style);
  format.z_decimals = o.z_decimals;
  const PromptParadigm paradigm = prompt_paradigm_from_string(o.paradigm);

  const PromptModules modules =
      o.templates.empty() ? default_modules(dataset.rule) : load_modules(o.templates, dataset.rule);
  RandomStream rng(mix_seed(o.seed, 0xE8E5));
  const auto exemplars = attach_exemplars(dataset, paradigm, format, rng);

  const auto& sample = dataset.test[o.index];
  const ZScoreVector z = normalize(sample.snapshot, dataset.stats, dataset.rule);
  const auto metas = make_sensor_set(dataset.sensor_count());
  const RenderedPrompt prompt =
      compose_prompt(modules, exemplars, render_value_block(sample.snapshot, dataset.stats, z, format, metas));
  out << prompt.text << "\n# tokens: " << prompt.token_count << "\n";
  return kExitOk;
}

int do_run(const RunOptions& o, const std::string& resolved_flags, std::ostream& out) {
  RunConfig cfg;
  cfg.name = o.name;
  cfg.dataset_path = o.dataset;
  cfg.paradigm = run_paradigm_from_string(o.paradigm);
  cfg.format.style = value_block_style_from_string(o.style);
  cfg.responder = responder_kind_from_string(o.responder);
  cfg.simulated.fidelity = o.fidelity;
  cfg.simulated.verbosity = responder_verbosity_from_string(o.verbosity);
  cfg.simulated.seed = o.responder_seed;
  cfg.seed = o.seed;
  cfg.concurrency = o.concurrency;
  cfg.endpoint.base_url = o.base_url;
  cfg.endpoint.model_name = o.model_name;
  cfg.endpoint.timeout_seconds = o.timeout;
  cfg.endpoint.max_retries = o.retries;
  cfg.endpoint.backoff_initial_seconds = o.backoff;
  cfg.endpoint.temperature = o.temperature;
  cfg.endpoint_adapted = o.adapted;
  cfg.model_path = o.model;
  if (!o.templates.empty()) cfg.template_dir = o.templates;

  std::optional<DetectorBundle> detector;
  if (cfg.paradigm == RunParadigm::Hybrid) {
    if (o.model.empty()) throw Error(ErrorKind::ModelMissing, "--paradigm hybrid requires --model");
    detector = read_model(o.model);
    HybridConfig hybrid = detector->hybrid;
    if (o.filter_threshold) hybrid.filter_threshold = *o.filter_threshold;
    if (o.max_selected) hybrid.max_selected = *o.max_selected;
    if (o.decision_threshold) hybrid.decision_threshold = *o.decision_threshold;
    cfg.hybrid = hybrid;
  }
  cfg.validate();

  const DatasetSplit dataset = load_dataset(o.dataset);
  RunResult result = evaluate_run(cfg, dataset, detector ? &*detector : nullptr);
  result.manifest["resolved_flags"] = resolved_flags;

  const fs::path dir = o.out;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoError, fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
  write_run_result(result, dir / "result.json");
  emit_report(result, ReportFormat::JsonSummary, dir / "summary.json");
  emit_report(result, ReportFormat::CsvPerSample, dir / "per_sample.csv");

  out << fmt::format("{} on {} test samples (dataset {})\n", result.name(), result.records.size(),
                     result.dataset_hash());
  out << metrics_line(result.metrics) << "\n";
  out << fmt::format("tokens mean {:.1f} max {}  rule adherence {:.3f}\n", result.token_stats.mean,
                     result.token_stats.max, result.adherence.label_match_rate);
  out << fmt::format("wrote {}\n", dir.string());
  return kExitOk;
}

int do_train(const TrainOptions& o, std::ostream& out) {
  const DatasetSplit dataset = load_dataset(o.dataset);
  const FeatureMode mode = feature_mode_from_string(o.features);
  const HybridConfig hybrid{o.filter_threshold, o.max_selected, o.decision_threshold};
  const TrainingHyper hyper{o.lr, o.epochs, o.l2, o.seed, true};
  const DetectorBundle bundle = train_bundle(dataset, mode, hybrid, hyper);
  write_model(bundle, o.out);
  out << fmt::format("trained {} detector: final loss {:.6f}, wrote {}\n", to_string(mode),
                     bundle.model.training_meta.final_loss, o.out);
  out << "validation  " << metrics_line(evaluate_detector(dataset, dataset.validation, bundle).metrics) << "\n";
  out << "test        " << metrics_line(evaluate_detector(dataset, dataset.test, bundle).metrics) << "\n";
  return kExitOk;
}

int do_compare(const CompareOptions& o, std::ostream& out) {
  std::vector<RunResult> results;
  for (const auto& path : o.results) results.push_back(read_run_result(path));
  const std::string table = render_comparison(compare_runs(results));
  out << table;
  if (!o.out.empty()) write_file(o.out, table);
  return kExitOk;
}

int do_check(std::ostream& out) {
  const ConsistencyReport report = verify_paper_consistency();
  out << render_consistency(report);
  return report.all_pass() ? kExitOk : kExitFailure;
}

int do_report(const ReportOptions& o, std::ostream& out) {
  const RunResult result = read_run_result(o.result);
  ReportFormat format;
  if (o.format == "json") {
    format = ReportFormat::JsonSummary;
  } else if (o.format == "csv") {
    format = ReportFormat::CsvPerSample;
  } else {
    throw Error(ErrorKind::ConfigError, fmt::format("unknown report format '{}' (expected json|csv)", o.format));
  }
  if (o.out.empty()) {
    out << (format == ReportFormat::JsonSummary ? json_summary(result) : csv_per_sample(result));
  } else {
    emit_report(result, format, o.out);
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rule-aware prompting toolkit for numeric telemetry anomaly detection", "ruleprompt"};
  Options options;
  const Subcommands subs = build_app(app, options);

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    if (subs.gen->parsed()) return do_gen(options.gen, out);
    if (subs.prompt->parsed()) return do_prompt(options.prompt, out);
    if (subs.run->parsed()) return do_run(options.run, subs.run->config_to_str(true, false), out);
    if (subs.train->parsed()) return do_train(options.train, out);
    if (subs.compare->parsed()) return do_compare(options.compare, out);
    if (subs.check->parsed()) return do_check(out);
    if (subs.report->parsed()) return do_report(options.report, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitConfig;
}

std::vector<FlagInfo> flag_registry() {
  CLI::App app;
  Options options;
  build_app(app, options);
  std::vector<FlagInfo> flags;
  auto collect = [&](const CLI::App& a, const std::string& name) {
    for (const CLI::Option* opt : a.get_options()) {
      for (const auto& lname : opt->get_lnames()) flags.push_back({name, "--" + lname});
    }
  };
  collect(app, "");
  for (const CLI::App* sub : app.get_subcommands({})) collect(*sub, sub->get_name());
  return flags;
}

}  // namespace ruleprompt::cli
