#include "config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

#include "deltaphi/error.hpp"

namespace dphi::cli {
namespace {

int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

// One YAML mapping. Every key read through get()/child() is marked as known;
// finish() rejects the rest.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(path_.empty() ? "<root>" : path_, line_of(node_), "expected a mapping");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <class T>
  void get(const std::string& key, T& out) {
    known_.insert(key);
    if (!node_ || !node_.IsMap()) return;
    const YAML::Node v = node_[key];
    if (!v) return;
    convert(v, key, out);
  }

  template <class T, class Parse>
  void get_with(const std::string& key, T& out, Parse parse) {
    std::string text;
    get(key, text);
    if (text.empty() && !(node_ && node_.IsMap() && node_[key])) return;
    try {
      out = parse(text);
    } catch (const ContractViolation& e) {
      throw ConfigError(key_path(key), line_of(node_[key]), e.what());
    }
  }

  Section child(const std::string& key) {
    known_.insert(key);
    if (!node_ || !node_.IsMap() || !node_[key]) return Section(YAML::Node(), key_path(key));
    return Section(node_[key], key_path(key));
  }

  int line() const { return node_ ? line_of(node_) : 0; }
  int line(const std::string& key) const { return node_ && node_.IsMap() && node_[key] ? line_of(node_[key]) : line(); }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!known_.count(key)) throw ConfigError(key_path(key), line_of(kv.first), "unknown key");
    }
  }

 private:
  template <class T>
  void convert(const YAML::Node& v, const std::string& key, T& out) {
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        const auto raw = v.as<std::string>();
        if (raw.empty() || raw.front() == '-') throw ConfigError(key_path(key), line_of(v), "expected a nonnegative integer");
        out = static_cast<T>(v.as<unsigned long long>());
      } else {
        out = v.as<T>();
      }
    } catch (const YAML::BadConversion&) {
      throw ConfigError(key_path(key), line_of(v), "wrong value type");
    }
  }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> known_;
};

Problem parse_problem(std::string_view s) {
  if (s == "darcy") return Problem::darcy;
  if (s == "timeseries") return Problem::timeseries;
  throw ContractViolation("expected darcy or timeseries");
}

std::size_t parse_keep(std::string_view s) {
  if (s == "all") return AuxiliaryPolicy::kAllSteps;
  std::size_t v = 0;
  for (char ch : s) {
    if (ch < '0' || ch > '9') throw ContractViolation("expected 'all' or a nonnegative integer");
    v = v * 10 + static_cast<std::size_t>(ch - '0');
  }
  if (s.empty()) throw ContractViolation("expected 'all' or a nonnegative integer");
  return v;
}

template <class F>
void validated(const std::string& key, int line, F check) {
  try {
    check();
  } catch (const ContractViolation& e) {
    throw ConfigError(key, line, e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  return p.is_absolute() ? p : base / p;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("<document>", e.mark.line + 1, e.msg);
  }
  ExperimentConfig c;
  Section top(root, "");
  top.get("seed", c.seed);
  std::string out_dir = c.output_dir.string();
  top.get("output_dir", out_dir);
  c.output_dir = resolve(base_dir, out_dir);

  {
    Section d = top.child("data");
    DataSection& ds = c.data;
    d.get_with("problem", ds.problem, parse_problem);
    d.get("train_samples", ds.train_samples);
    d.get("test_samples", ds.test_samples);
    d.get("resolution", ds.resolution);
    d.get("high_resolution", ds.high_resolution);
    std::string train_path = "train.bin", test_path = "test.bin", hr_path = "test_high_res.bin";
    d.get("train_path", train_path);
    d.get("test_path", test_path);
    d.get("high_res_test_path", hr_path);
    ds.train_path = resolve(c.output_dir, train_path);
    ds.test_path = resolve(c.output_dir, test_path);
    ds.high_res_test_path = resolve(c.output_dir, hr_path);

    Section dc = d.child("darcy");
    dc.get("coefficient_low", ds.darcy.coefficient_low);
    dc.get("coefficient_high", ds.darcy.coefficient_high);
    dc.get("correlation_length", ds.darcy.correlation_length);
    dc.get("forcing", ds.darcy.forcing);
    dc.finish();
    Section tc = d.child("timeseries");
    tc.get("input_steps", ds.timeseries.input_steps);
    tc.get("output_steps", ds.timeseries.output_steps);
    tc.get("viscosity", ds.timeseries.viscosity);
    tc.get("dt", ds.timeseries.dt);
    tc.get("velocity_amplitude", ds.timeseries.velocity_amplitude);
    tc.get("correlation_length", ds.timeseries.correlation_length);
    tc.finish();
    d.finish();

    validated("data", d.line(), [&] {
      DPHI_REQUIRE(ds.train_samples >= 2 && ds.test_samples >= 1, "need at least 2 training and 1 test sample");
      DPHI_REQUIRE(ds.high_resolution == 0 || ds.high_resolution >= ds.resolution,
                   "high_resolution must not be below resolution");
      DarcyConfig probe = ds.darcy;
      probe.resolution = ds.resolution;
      probe.num_samples = ds.train_samples;
      TimeSeriesConfig tprobe = ds.timeseries;
      tprobe.resolution = ds.resolution;
      tprobe.num_samples = ds.train_samples;
      if (ds.problem == Problem::darcy) validate(probe); else validate(tprobe);
    });
  }

  {
    Section m = top.child("model");
    m.get_with("architecture", c.model.architecture, parse_architecture);
    m.get("width", c.model.width);
    m.get("depth", c.model.depth);
    m.get("modes", c.model.modes);
    m.get_with("activation", c.model.activation, parse_activation);
    m.finish();
    validated("model", m.line(), [&] {
      validate(c.model);
      validate_resolution(c.model, c.data.resolution, c.data.resolution);
    });
  }

  {
    Section t = top.child("train");
    TrainConfig& tc = c.train;
    t.get("epochs", tc.epochs);
    t.get("batch_size", tc.batch_size);
    t.get("learning_rate", tc.learning_rate);
    t.get("weight_decay", tc.weight_decay);
    t.get("lr_step", tc.lr_step);
    t.get("lr_gamma", tc.lr_gamma);
    t.get_with("mode", tc.mode, parse_training_mode);
    t.get("resample_each_epoch", tc.resample_each_epoch);
    t.get("eval_every", tc.eval_every);
    t.finish();
  }

  {
    Section r = top.child("retrieval");
    RetrievalSection& rs = c.retrieval;
    r.get_with("metric", rs.metric, parse_metric);
    r.get("k", c.train.k);
    r.get_with("keep_last_input_steps", rs.policy.keep_last_input_steps, parse_keep);
    r.get("include_aux_solution", rs.policy.include_aux_solution);
    r.get("include_score_channel", rs.policy.include_score_channel);
    r.get("robust_repeats", rs.robust_repeats);
    r.get("robust_top_k", rs.robust_top_k);
    r.finish();
    c.train.policy = rs.policy;
    c.train.seed = c.seed;
    validated("retrieval", r.line(), [&] {
      DPHI_REQUIRE(rs.robust_repeats >= 2 && rs.robust_top_k >= 1, "robust_repeats must be >= 2, robust_top_k >= 1");
      validate(rs.policy);
      const std::size_t cin = c.data.problem == Problem::darcy ? 1 : c.data.timeseries.input_steps;
      kept_aux_input_channels(rs.policy, cin);
    });
    validated("train", top.line("train"), [&] { validate(c.train); });
  }

  {
    Section a = top.child("analysis");
    a.get("max_rank", c.max_rank);
    a.finish();
    validated("analysis", a.line(), [&] {
      DPHI_REQUIRE(c.max_rank >= 1 && c.max_rank <= c.data.train_samples, "max_rank must be in [1, train_samples]");
    });
  }
  top.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", 0, "cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

std::uint64_t train_seed(const ExperimentConfig& c) { return c.seed; }
std::uint64_t test_seed(const ExperimentConfig& c) { return c.seed ^ 0x9E3779B97F4A7C15ULL; }
std::uint64_t high_res_test_seed(const ExperimentConfig& c) { return c.seed ^ 0xC2B2AE3D27D4EB4FULL; }

Dataset generate_dataset(const ExperimentConfig& c, std::size_t samples, std::size_t resolution, std::uint64_t seed) {
  if (c.data.problem == Problem::darcy) {
    DarcyConfig d = c.data.darcy;
    d.resolution = resolution;
    d.num_samples = samples;
    d.seed = seed;
    return generate_darcy_dataset(d);
  }
  TimeSeriesConfig t = c.data.timeseries;
  t.resolution = resolution;
  t.num_samples = samples;
  t.seed = seed;
  return generate_timeseries_dataset(t);
}

OperatorSpec model_spec(const ExperimentConfig& c, TrainingMode mode, const Dataset& train_set) {
  OperatorSpec s = c.model;
  const std::size_t cin = train_set.input_shape().channels, cout = train_set.output_shape().channels;
  s.in_channels = mode == TrainingMode::direct ? cin : assembled_channels(c.retrieval.policy, cin, cout);
  s.out_channels = cout;
  return s;
}

TrainConfig train_config(const ExperimentConfig& c, TrainingMode mode) {
  TrainConfig t = c.train;
  t.mode = mode;
  return t;
}

}  // namespace dphi::cli
