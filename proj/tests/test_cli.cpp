#include <doctest.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "ruleprompt/datagen.hpp"
#include "ruleprompt/harness.hpp"
#include "support.hpp"

using namespace ruleprompt;
using nlohmann::json;

namespace {

struct Invocation {
  int code = -1;
  std::string out;
  std::string err;
};

Invocation invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "ruleprompt");
  std::ostringstream out, err;
  Invocation inv;
  inv.code = cli::run(args, out, err);
  inv.out = out.str();
  inv.err = err.str();
  return inv;
}

std::size_t count_lines_starting(const std::string& text, const std::string& prefix) {
  std::size_t n = 0;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) n += line.rfind(prefix, 0) == 0;
  return n;
}

// The 255-sensor default dataset, written once per process.
const std::string& default_dataset_file() {
  static rptest::TempDir dir;
  static const std::string path = [] {
    const std::string p = (dir / "default.jsonl").string();
    REQUIRE(invoke({"gen", "--seed", "42", "--out", p}).code == 0);
    return p;
  }();
  return path;
}

}  // namespace

TEST_CASE("gen: header echoes the seed; default protocol") {
  const DatasetSplit d = read_dataset(default_dataset_file());
  CHECK(d.manifest.seed == 42);
  CHECK(d.sensor_count() == 255);
  CHECK(d.train.size() == 1200);
  CHECK(d == rptest::default_dataset());
  const std::string text = rptest::slurp(default_dataset_file());
  const json header = json::parse(text.substr(0, text.find('\n')));
  CHECK(header["seed"] == 42);
}

TEST_CASE("gen: deterministic for a fixed seed") {
  rptest::TempDir dir;
  const std::string a = (dir / "a.jsonl").string(), b = (dir / "b.jsonl").string();
  REQUIRE(invoke({"gen", "--sensors", "8", "--seed", "7", "--out", a}).code == 0);
  REQUIRE(invoke({"gen", "--sensors", "8", "--seed", "7", "--out", b}).code == 0);
  CHECK(rptest::slurp(a) == rptest::slurp(b));
}

TEST_CASE("gen: unreachable quota exits 4 with a hint") {
  rptest::TempDir dir;
  const Invocation inv = invoke({"gen", "--deviation", "0.0001", "--out", (dir / "x.jsonl").string()});
  CHECK(inv.code == cli::kExitDataset);
  CHECK(inv.err.find("QuotaUnreachable") != std::string::npos);
  CHECK(inv.err.find("larger deviation") != std::string::npos);
}

TEST_CASE("prompt subcommand") {
  const std::string ds = default_dataset_file();
  const Invocation z = invoke({"prompt", "--dataset", ds, "--style", "zscore", "--index", "0"});
  REQUIRE(z.code == 0);
  CHECK(z.out.find("abs_z = ") != std::string::npos);
  CHECK(count_lines_starting(z.out, "# tokens: ") == 1);

  const Invocation v = invoke({"prompt", "--dataset", ds, "--style", "value", "--index", "0"});
  REQUIRE(v.code == 0);
  CHECK(v.out.find("abs_z") == std::string::npos);

  const Invocation icl = invoke({"prompt", "--dataset", ds, "--paradigm", "icl"});
  REQUIRE(icl.code == 0);
  CHECK(count_lines_starting(icl.out, "Label: ") == 5);
  const auto query = icl.out.find("Now assess the following snapshot.");
  REQUIRE(query != std::string::npos);
  CHECK(count_lines_starting(icl.out.substr(query), "Label: ") == 0);

  CHECK(invoke({"prompt", "--dataset", ds, "--style", "bogus"}).code == cli::kExitConfig);
  CHECK(invoke({"prompt", "--dataset", ds, "--paradigm", "lora"}).code == cli::kExitConfig);
  CHECK(invoke({"prompt", "--dataset", ds, "--index", "999"}).code == cli::kExitConfig);
}

TEST_CASE("check subcommand") {
  const Invocation inv = invoke({"check"});
  CHECK(inv.code == 0);
  CHECK(count_lines_starting(inv.out, "PASS") == 7);
}

TEST_CASE("run: oracle summary, reports, idempotence") {
  rptest::TempDir dir;
  const std::string ds = default_dataset_file();
  const std::vector<std::string> args{"run",        "--dataset", ds,    "--responder", "simulated",
                                      "--fidelity", "1.0",       "--style", "zscore", "--out",
                                      (dir / "r1").string()};
  const Invocation inv = invoke(args);
  REQUIRE(inv.code == 0);
  CHECK(inv.out.find("accuracy 1.000") != std::string::npos);
  for (const char* f : {"result.json", "summary.json", "per_sample.csv"}) {
    CHECK(std::filesystem::exists(dir / "r1" / f));
  }
  auto again = args;
  again.back() = (dir / "r2").string();
  REQUIRE(invoke(again).code == 0);
  CHECK(rptest::slurp(dir / "r1" / "per_sample.csv") == rptest::slurp(dir / "r2" / "per_sample.csv"));

  const json manifest = json::parse(rptest::slurp(dir / "r1" / "summary.json"))["manifest"];
  CHECK(manifest["resolved_flags"].get<std::string>().find("fidelity=1.0") != std::string::npos);
}

TEST_CASE("run: value style fails under the simulator") {
  rptest::TempDir dir;
  const Invocation inv = invoke({"run", "--dataset", default_dataset_file(), "--style", "value", "--responder",
                                 "simulated", "--out", (dir / "r").string()});
  CHECK(inv.code != 0);
  CHECK(inv.code == cli::kExitEndpoint);
  CHECK(inv.err.find("UnparseableValueBlock") != std::string::npos);
}

TEST_CASE("run: error exit codes") {
  rptest::TempDir dir;
  CHECK(invoke({"run", "--dataset", (dir / "none.jsonl").string()}).code == cli::kExitDataset);
  CHECK(invoke({"run", "--dataset", default_dataset_file(), "--paradigm", "hybrid"}).code == cli::kExitConfig);
  CHECK(invoke({"run", "--dataset", default_dataset_file(), "--fidelity", "2"}).code == cli::kExitConfig);
  CHECK(invoke({"run", "--dataset", default_dataset_file(), "--responder", "endpoint", "--base-url",
                "http://127.0.0.1:1", "--retries", "0", "--out", (dir / "e").string()})
            .code == cli::kExitEndpoint);
  CHECK(invoke({"run"}).code == cli::kExitConfig);
  CHECK(invoke({"frobnicate"}).code == cli::kExitConfig);
}

TEST_CASE("config file values yield to command-line flags") {
  rptest::TempDir dir;
  const std::string ds = default_dataset_file();
  rptest::spit(dir / "cfg.ini", "[run]\nfidelity=0.0\nverbosity=label\nresponder-seed=3\n");
  const std::string cfg = (dir / "cfg.ini").string();

  const Invocation from_file =
      invoke({"--config", cfg, "run", "--dataset", ds, "--out", (dir / "a").string()});
  REQUIRE(from_file.code == 0);
  CHECK(from_file.out.find("accuracy 0.000") != std::string::npos);

  const Invocation overridden =
      invoke({"--config", cfg, "run", "--dataset", ds, "--fidelity", "1.0", "--out", (dir / "b").string()});
  REQUIRE(overridden.code == 0);
  CHECK(overridden.out.find("accuracy 1.000") != std::string::npos);
  const json manifest = json::parse(rptest::slurp(dir / "b" / "summary.json"))["manifest"];
  const std::string resolved = manifest["resolved_flags"];
  CHECK(resolved.find("fidelity=1.0") != std::string::npos);
  CHECK(resolved.find("verbosity=\"label\"") != std::string::npos);
}

TEST_CASE("train, hybrid run, compare and report") {
  rptest::TempDir dir;
  const std::string ds = default_dataset_file();
  const std::string model = (dir / "model.json").string();
  const Invocation train = invoke({"train", "--dataset", ds, "--out", model});
  REQUIRE(train.code == 0);
  CHECK(train.out.find("test ") != std::string::npos);

  const Invocation hybrid = invoke({"run", "--dataset", ds, "--paradigm", "hybrid", "--model", model, "--name",
                                    "hybrid", "--out", (dir / "h").string()});
  REQUIRE(hybrid.code == 0);
  const Invocation zero =
      invoke({"run", "--dataset", ds, "--name", "zero", "--out", (dir / "z").string()});
  REQUIRE(zero.code == 0);

  const std::string table = (dir / "table.md").string();
  const Invocation cmp = invoke({"compare", "--results", (dir / "z" / "result.json").string(),
                                 (dir / "h" / "result.json").string(), "--out", table});
  REQUIRE(cmp.code == 0);
  CHECK(cmp.out.find("| zero") < cmp.out.find("| hybrid"));
  CHECK(rptest::slurp(table) == cmp.out);

  const Invocation csv = invoke({"report", "--result", (dir / "z" / "result.json").string(), "--format", "csv"});
  REQUIRE(csv.code == 0);
  CHECK(csv.out == rptest::slurp(dir / "z" / "per_sample.csv"));
  const Invocation js = invoke({"report", "--result", (dir / "z" / "result.json").string()});
  CHECK(js.out == rptest::slurp(dir / "z" / "summary.json"));
  CHECK(invoke({"report", "--result", (dir / "z" / "result.json").string(), "--format", "xml"}).code ==
        cli::kExitConfig);

  rptest::TempDir other;
  const std::string small = (other / "s.jsonl").string();
  REQUIRE(invoke({"gen", "--sensors", "8", "--seed", "3", "--out", small}).code == 0);
  REQUIRE(invoke({"run", "--dataset", small, "--out", (other / "s").string()}).code == 0);
  CHECK(invoke({"compare", "--results", (dir / "z" / "result.json").string(), (other / "s" / "result.json").string()})
            .code == cli::kExitDataset);
}

TEST_CASE("--help enumerates every registered flag") {
  const auto registry = cli::flag_registry();
  REQUIRE(registry.size() > 40);
  const Invocation top = invoke({"--help"});
  CHECK(top.code == 0);
  for (const char* sub : {"gen", "prompt", "run", "train", "compare", "check", "report"}) {
    CHECK(top.out.find(sub) != std::string::npos);
  }
  std::map<std::string, std::string> help;
  for (const auto& f : registry) {
    if (!help.count(f.subcommand)) {
      help[f.subcommand] = f.subcommand.empty() ? top.out : invoke({f.subcommand, "--help"}).out;
    }
    INFO(f.subcommand << " " << f.flag);
    CHECK(help[f.subcommand].find(f.flag) != std::string::npos);
  }
  for (const char* flag : {"--seed", "--sensors", "--deviation", "--k", "--fidelity", "--concurrency", "--base-url",
                           "--filter-threshold", "--config"}) {
    bool found = false;
    for (const auto& f : registry) found = found || f.flag == flag;
    CHECK_MESSAGE(found, flag);
  }
}
