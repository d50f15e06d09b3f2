#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "../oracles/retrieval_oracle.hpp"
#include "cli/commands.hpp"
#include "cli/config.hpp"
#include "deltaphi/binary_io.hpp"
#include "deltaphi/log.hpp"

namespace fs = std::filesystem;
using namespace dphi;
using namespace dphi::cli;

namespace {

struct QuietLog {
  LogSink previous = set_log_sink([](LogLevel, const std::string&) {});
  ~QuietLog() { set_log_sink(previous); }
};

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("deltaphi_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string slurp(const fs::path& p) {
  const auto b = io::read_file(p);
  return {b.begin(), b.end()};
}

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

const char* kTinyConfig = R"(seed: 7
output_dir: out
data:
  problem: darcy
  train_samples: 10
  test_samples: 4
  resolution: 12
model:
  width: 6
  depth: 2
  modes: 4
train:
  epochs: 2
  batch_size: 4
retrieval:
  k: 3
analysis:
  max_rank: 4
)";

}  // namespace

TEST_CASE("config: defaults and relative paths") {
  const ExperimentConfig c = parse_config("seed: 5\n", "/base");
  CHECK(c.seed == 5);
  CHECK(c.output_dir == fs::path("/base/out"));
  CHECK(c.data.train_path == fs::path("/base/out/train.bin"));
  CHECK(c.train.seed == 5);
  CHECK(c.model.width == 32);
  CHECK(c.train.k == 20);

  const ExperimentConfig d = parse_config("output_dir: /abs\ndata:\n  test_path: t.bin\n", "/base");
  CHECK(d.data.test_path == fs::path("/abs/t.bin"));
}

TEST_CASE("config: every section is read") {
  const ExperimentConfig c = parse_config(R"(seed: 3
data:
  problem: timeseries
  resolution: 16
  high_resolution: 32
  timeseries:
    input_steps: 4
    output_steps: 2
model:
  architecture: resnet
  activation: relu
  modes: 8
train:
  epochs: 3
  learning_rate: 0.01
  mode: residual
retrieval:
  metric: euclidean
  k: 6
  keep_last_input_steps: 2
  include_score_channel: false
)", ".");
  CHECK(c.data.problem == Problem::timeseries);
  CHECK(c.data.timeseries.input_steps == 4);
  CHECK(c.model.architecture == Architecture::resnet);
  CHECK(c.model.activation == Activation::relu);
  CHECK(c.train.learning_rate == 0.01);
  CHECK(c.train.k == 6);
  CHECK(c.retrieval.metric == SimilarityMetric::euclidean);
  CHECK(c.train.policy.keep_last_input_steps == 2);
  CHECK_FALSE(c.train.policy.include_score_channel);

  const auto ds = parse_config("data:\n  problem: timeseries\n  timeseries:\n    input_steps: 3\n", ".");
  const auto train = generate_dataset(ds, 2, 8, 1);
  CHECK(model_spec(ds, TrainingMode::direct, train).in_channels == 3);
  CHECK(model_spec(ds, TrainingMode::residual, train).in_channels == assembled_channels({}, 3, train.output_shape().channels));
}

TEST_CASE("config: strict errors name the key and line") {
  auto fails = [](const std::string& text, const std::string& key, int line) {
    try {
      parse_config(text, ".");
      FAIL("accepted: " << text);
    } catch (const ConfigError& e) {
      CHECK(e.key() == key);
      CHECK(e.line() == line);
    }
  };
  fails("seed: 1\nmodel:\n  widht: 3\n", "model.widht", 3);
  fails("sede: 1\n", "sede", 1);
  fails("train:\n  epochs: many\n", "train.epochs", 2);
  fails("seed: -4\n", "seed", 1);
  fails("data:\n  darcy:\n    forcing: 1\n    extra: 2\n", "data.darcy.extra", 4);
  fails("model:\n  activation: tanh\n", "model.activation", 2);
  fails("retrieval:\n  metric: chebyshev\n", "retrieval.metric", 2);
  fails("model:\n  modes: 30\n", "model", 2);
  fails("train:\n  learning_rate: -1\n", "train", 2);
  fails("model: 3\n", "model", 1);
  CHECK_THROWS_AS(parse_config("seed: [1\n", "."), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/deltaphi.yaml"), ConfigError);
}

TEST_CASE("cli: failures are one machine-parseable line") {
  const fs::path dir = scratch("errors");
  write(dir / "bad.yaml", "model:\n  depth: two\n");
  Run r = run({"train", "--config", (dir / "bad.yaml").string()});
  CHECK(r.code != 0);
  CHECK(r.err == "deltaphi: error: config: key 'model.depth' (line 2): wrong value type\n");

  r = run({"no-such-command"});
  CHECK(r.code != 0);
  CHECK(r.err.rfind("deltaphi: error: usage: ", 0) == 0);

  write(dir / "ok.yaml", "output_dir: out\n");
  r = run({"eval", "-c", (dir / "ok.yaml").string()});
  CHECK(r.code != 0);
  CHECK(r.err.rfind("deltaphi: error: io: cannot open", 0) == 0);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);

  r = run({"train", "-c", (dir / "ok.yaml").string(), "--mode", "sideways"});
  CHECK(r.code != 0);

  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("cli: config path from the environment") {
  const QuietLog quiet;
  const fs::path dir = scratch("env");
  write(dir / "c.yaml", kTinyConfig);
  ::setenv("DELTAPHI_CONFIG", (dir / "c.yaml").string().c_str(), 1);
  const Run r = run({"datagen"});
  ::unsetenv("DELTAPHI_CONFIG");
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "out" / "train.bin"));
  CHECK(run({"datagen"}).code != 0);
}

TEST_CASE("compare reports the relative gain with two decimals") {
  const QuietLog quiet;
  const fs::path dir = scratch("compare");
  write(dir / "c.yaml", "output_dir: .\n");
  write(dir / "eval_summary_direct.csv", "mode,samples,mean_relative_l2\ndirect,60,3.70e-2\n");
  write(dir / "eval_summary_residual.csv", "mode,samples,mean_relative_l2\nresidual,60,3.31e-2\n");
  REQUIRE(run({"compare", "-c", (dir / "c.yaml").string()}).code == 0);
  CHECK(slurp(dir / "compare.csv") ==
        "source,direct_error,residual_error,gain\neval,0.036999999999999998,0.033099999999999997,10.54%\n");

  write(dir / "eval_summary_residual.csv", "mode,samples,mean_relative_l2\nresidual,60,abc\n");
  const Run bad = run({"compare", "-c", (dir / "c.yaml").string()});
  CHECK(bad.code != 0);
  CHECK(bad.err.rfind("deltaphi: error: parse: ", 0) == 0);
}

TEST_CASE("suggest-k matches the exhaustive scan") {
  const QuietLog quiet;
  const fs::path dir = scratch("suggest");
  write(dir / "c.yaml", "seed: 11\ndata:\n  train_samples: 20\n  test_samples: 6\n  resolution: 12\nmodel:\n  modes: 4\n"
                        "analysis:\n  max_rank: 5\n");
  const std::string cfg = (dir / "c.yaml").string();
  REQUIRE(run({"datagen", "-c", cfg}).code == 0);
  REQUIRE(run({"suggest-k", "-c", cfg}).code == 0);
  const auto train = load_dataset(dir / "out" / "train.bin"), test = load_dataset(dir / "out" / "test.bin");
  const std::size_t expected =
      oracle::brute_initial_k(train.inputs(), test.inputs(), SimilarityMetric::cosine_distance);
  const std::string csv = slurp(dir / "out" / "suggest_k.csv");
  const std::string row = csv.substr(csv.find('\n') + 1);
  CHECK(std::stoul(row.substr(0, row.find(','))) == expected);
}

TEST_CASE("every command is deterministic byte for byte") {
  const QuietLog quiet;
  std::map<std::string, std::string> first;
  for (int pass = 0; pass < 2; ++pass) {
    const fs::path dir = scratch("determinism" + std::to_string(pass));
    std::string text = kTinyConfig;
    text.replace(text.find("resolution: 12"), 14, "resolution: 12\n  high_resolution: 24");
    write(dir / "c.yaml", text);
    const std::string cfg = (dir / "c.yaml").string();
    for (const char* cmd : {"datagen", "index", "suggest-k", "train", "eval", "eval-robust", "genres",
                            "analyze-rank", "analyze-pca", "compare"})
      REQUIRE_MESSAGE(run({cmd, "-c", cfg}).code == 0, cmd);
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(dir / "out")) files[e.path().filename().string()] = slurp(e.path());
    CHECK(files.size() >= 25);
    if (pass == 0) {
      first = files;
    } else {
      for (const auto& [name, bytes] : files) CHECK_MESSAGE(first.at(name) == bytes, name);
    }
  }
}

TEST_CASE("seed override changes the generated data") {
  const QuietLog quiet;
  const fs::path dir = scratch("seed");
  write(dir / "c.yaml", kTinyConfig);
  const std::string cfg = (dir / "c.yaml").string();
  REQUIRE(run({"datagen", "-c", cfg}).code == 0);
  const std::string a = slurp(dir / "out" / "train.bin");
  REQUIRE(run({"datagen", "-c", cfg, "--seed", "8"}).code == 0);
  CHECK(slurp(dir / "out" / "train.bin") != a);
}
