#include "commands.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <random>
#include <sstream>

#include "config.hpp"
#include "deltaphi/analysis.hpp"
#include "deltaphi/binary_io.hpp"
#include "deltaphi/error.hpp"
#include "deltaphi/log.hpp"

namespace dphi::cli {
namespace {

constexpr std::uint64_t kRobustSalt = 0x632BE59BD9B4E019ULL;
constexpr std::uint64_t kLabelSalt = 0x85EBCA77C2B2AE63ULL;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  io::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return {bytes.begin(), bytes.end()};
}

std::vector<TrainingMode> modes_of(const std::string& m) {
  if (m == "both") return {TrainingMode::direct, TrainingMode::residual};
  try {
    return {parse_training_mode(m)};
  } catch (const ContractViolation&) {
    throw UsageError("--mode must be direct, residual or both");
  }
}

std::string mode_name(TrainingMode m) { return std::string(to_string(m)); }

struct Context {
  ExperimentConfig config;
  std::filesystem::path out() const { return config.output_dir; }
  std::filesystem::path model_path(TrainingMode m) const { return out() / ("model_" + mode_name(m) + ".dphm"); }

  Dataset train_set() const { return load_dataset(config.data.train_path); }
  Dataset test_set() const { return load_dataset(config.data.test_path); }
  Dataset high_res_test_set() const {
    if (config.data.high_resolution == 0) throw UsageError("data.high_resolution is not set");
    return load_dataset(config.data.high_res_test_path);
  }
  RetrievalIndex index(const Dataset& train) const { return RetrievalIndex(train, config.retrieval.metric); }
};

void cmd_datagen(const Context& ctx) {
  const auto& c = ctx.config;
  std::filesystem::create_directories(ctx.out());
  log_info("generating " + std::to_string(c.data.train_samples) + " training samples");
  save_dataset(generate_dataset(c, c.data.train_samples, c.data.resolution, train_seed(c)), c.data.train_path);
  log_info("generating " + std::to_string(c.data.test_samples) + " test samples");
  save_dataset(generate_dataset(c, c.data.test_samples, c.data.resolution, test_seed(c)), c.data.test_path);
  if (c.data.high_resolution > 0) {
    log_info("generating " + std::to_string(c.data.test_samples) + " test samples at " +
             std::to_string(c.data.high_resolution) + "^2");
    save_dataset(generate_dataset(c, c.data.test_samples, c.data.high_resolution, high_res_test_seed(c)),
                 c.data.high_res_test_path);
  }
}

void cmd_index(const Context& ctx) {
  const Dataset train = ctx.train_set(), test = ctx.test_set();
  const RetrievalIndex index = ctx.index(train);
  std::string csv = "test_id,aux_id,distance,degenerate\n";
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Retrieval r = retrieve_inference(index, test[i].input);
    csv += std::to_string(i) + "," + std::to_string(r.id) + "," + num(r.distance) + "," + (r.degenerate ? "1" : "0") + "\n";
  }
  write_text(ctx.out() / "retrieval.csv", csv);
}

void cmd_suggest_k(const Context& ctx) {
  const Dataset train = ctx.train_set(), test = ctx.test_set();
  const auto tr = train.inputs(), te = test.inputs();
  const KSuggestion s = suggest_initial_k(tr, te, ctx.config.retrieval.metric);
  log_info("suggested K = " + std::to_string(s.k) + (s.saturated ? " (saturated)" : ""));
  write_text(ctx.out() / "suggest_k.csv", "k,worst_test_distance,saturated\n" + std::to_string(s.k) + "," +
                                              num(s.worst_test_distance) + "," + (s.saturated ? "1" : "0") + "\n");
}

std::string train_csv(const TrainReport& report) {
  std::string csv = "epoch,learning_rate,train_loss,test_error\n";
  for (const auto& e : report.epochs)
    csv += std::to_string(e.epoch) + "," + num(e.learning_rate) + "," + num(e.train_loss) + "," +
           (e.test_error ? num(*e.test_error) : "") + "\n";
  return csv;
}

void cmd_train(const Context& ctx, const std::vector<TrainingMode>& modes) {
  const Dataset train = ctx.train_set(), test = ctx.test_set();
  const RetrievalIndex index = ctx.index(train);
  for (TrainingMode m : modes) {
    log_info("training " + mode_name(m) + " model");
    const TrainResult r =
        dphi::train(train, test, model_spec(ctx.config, m, train), train_config(ctx.config, m), &index);
    save_checkpoint(r.model, ctx.model_path(m));
    write_text(ctx.out() / ("train_" + mode_name(m) + ".csv"), train_csv(r.report));
    log_info(mode_name(m) + ": final test error " + num(r.report.final_test_error) + " in " +
             std::to_string(r.report.wall_seconds) + " s");
  }
}

void write_eval(const Context& ctx, const std::string& prefix, TrainingMode m, const EvalMetrics& metrics) {
  std::string csv = "sample,relative_l2,aux_id,degenerate\n";
  for (std::size_t i = 0; i < metrics.per_sample.size(); ++i) {
    csv += std::to_string(i) + "," + num(metrics.per_sample[i]) + ",";
    if (m == TrainingMode::residual)
      csv += std::to_string(metrics.aux_ids[i]) + "," + (metrics.degenerate[i] ? "1" : "0");
    else
      csv += ",";
    csv += "\n";
  }
  write_text(ctx.out() / (prefix + "_" + mode_name(m) + ".csv"), csv);
  write_text(ctx.out() / (prefix + "_summary_" + mode_name(m) + ".csv"),
             "mode,samples,mean_relative_l2\n" + mode_name(m) + "," + std::to_string(metrics.per_sample.size()) +
                 "," + num(metrics.mean) + "\n");
  log_info(prefix + " " + mode_name(m) + ": mean relative L2 " + num(metrics.mean));
}

void cmd_eval(const Context& ctx, const std::vector<TrainingMode>& modes) {
  const Dataset train = ctx.train_set(), test = ctx.test_set();
  const RetrievalIndex index = ctx.index(train);
  for (TrainingMode m : modes) {
    const OperatorModel model = load_checkpoint(ctx.model_path(m));
    write_eval(ctx, "eval", m, evaluate(model, test, {&train, &index}, m, ctx.config.retrieval.policy));
  }
}

void cmd_genres(const Context& ctx, const std::vector<TrainingMode>& modes) {
  const Dataset train = ctx.train_set(), test = ctx.high_res_test_set();
  const RetrievalIndex index = ctx.index(train);
  for (TrainingMode m : modes) {
    const OperatorModel model = load_checkpoint(ctx.model_path(m));
    write_eval(ctx, "genres", m,
               evaluate_cross_resolution(model, test, {&train, &index}, m, ctx.config.retrieval.policy));
  }
}

void cmd_eval_robust(const Context& ctx) {
  const auto& r = ctx.config.retrieval;
  const Dataset train = ctx.train_set(), test = ctx.test_set();
  const RetrievalIndex index = ctx.index(train);
  const OperatorModel model = load_checkpoint(ctx.model_path(TrainingMode::residual));
  std::mt19937_64 rng(ctx.config.seed ^ kRobustSalt);
  std::vector<double> errors;
  std::string csv = "repeat,mean_relative_l2\n";
  for (std::size_t rep = 0; rep < r.robust_repeats; ++rep) {
    const auto m = evaluate(model, test, {&train, &index}, TrainingMode::residual, r.policy,
                            AuxRule::random_topk(r.robust_top_k), &rng);
    errors.push_back(m.mean);
    csv += std::to_string(rep) + "," + num(m.mean) + "\n";
  }
  double mean = 0.0;
  for (double e : errors) mean += e;
  mean /= static_cast<double>(errors.size());
  double var = 0.0;
  for (double e : errors) var += (e - mean) * (e - mean);
  const double stddev = std::sqrt(var / static_cast<double>(errors.size() - 1));
  write_text(ctx.out() / "robust.csv", csv);
  write_text(ctx.out() / "robust_summary.csv",
             "mean,std,relative_std\n" + num(mean) + "," + num(stddev) + "," + num(stddev / mean) + "\n");
  log_info("robustness: mean " + num(mean) + ", std " + num(stddev));
}

void cmd_analyze_rank(const Context& ctx) {
  const Dataset train = ctx.train_set(), test = ctx.test_set();
  const RankCurve curve = similarity_rank_curve(train, test, ctx.config.max_rank, ctx.config.retrieval.metric);
  std::vector<double> ranks(curve.mean_distance.size());
  for (std::size_t r = 0; r < ranks.size(); ++r) ranks[r] = static_cast<double>(r + 1);
  const double rho = spearman(ranks, curve.mean_distance);
  write_text(ctx.out() / "rank_curve.csv", rank_curve_csv(curve));
  write_text(ctx.out() / "rank_curve.svg", rank_curve_svg(curve));
  write_text(ctx.out() / "rank_summary.csv", "spearman\n" + num(rho) + "\n");
  log_info("rank curve Spearman " + num(rho));
}

void cmd_analyze_pca(const Context& ctx) {
  const Dataset train = ctx.train_set(), test = ctx.test_set();
  const RetrievalIndex index = ctx.index(train);
  std::mt19937_64 rng(ctx.config.seed ^ kLabelSalt);
  const auto pairs = build_residual_dataset(train, index, ctx.config.train.k, ctx.config.retrieval.policy, rng);
  const LabelStudy study = label_distribution_study(train, pairs, test, index);
  for (const auto& [name, dist] : {std::pair<std::string, const LabelDistribution*>{"direct", &study.direct},
                                   std::pair<std::string, const LabelDistribution*>{"residual", &study.residual}}) {
    const auto points = point_rows(*dist);
    const auto stats = stat_rows(*dist);
    write_text(ctx.out() / ("label_" + name + "_points.csv"), points_csv(points));
    write_text(ctx.out() / ("label_" + name + "_stats.csv"), stats_csv(stats));
    write_text(ctx.out() / ("label_" + name + ".svg"), label_distribution_svg(*dist, name + " labels"));
    log_info(name + " test 1-sigma ellipse area " + num(dist->test.std_ellipse().area()));
  }
}

double read_summary_error(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  const auto nl = text.find('\n');
  if (nl == std::string::npos || text.compare(0, nl, "mode,samples,mean_relative_l2") != 0)
    throw ParseError("unexpected header in " + path.string(), 0);
  const auto end = text.find('\n', nl + 1);
  const std::string row = text.substr(nl + 1, end == std::string::npos ? std::string::npos : end - nl - 1);
  const auto comma = row.rfind(',');
  if (comma == std::string::npos) throw ParseError("malformed row in " + path.string(), nl + 1);
  double v = 0.0;
  const char* first = row.data() + comma + 1;
  const auto [ptr, ec] = std::from_chars(first, row.data() + row.size(), v);
  if (ec != std::errc() || ptr != row.data() + row.size())
    throw ParseError("malformed error value in " + path.string(), nl + 1 + comma + 1);
  return v;
}

void cmd_compare(const Context& ctx, const std::string& source) {
  if (source != "eval" && source != "genres") throw UsageError("--source must be eval or genres");
  const double direct = read_summary_error(ctx.out() / (source + "_summary_direct.csv"));
  const double residual = read_summary_error(ctx.out() / (source + "_summary_residual.csv"));
  const std::string gain = format_percent(relative_gain(direct, residual));
  write_text(ctx.out() / (source == "eval" ? "compare.csv" : "compare_genres.csv"),
             "source,direct_error,residual_error,gain\n" + source + "," + num(direct) + "," + num(residual) + "," +
                 gain + "\n");
  log_info("relative gain " + gain);
}

std::string category_of(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const UsageError*>(&e)) return "usage";
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const ContractViolation*>(&e)) return "contract";
  if (dynamic_cast<const DegenerateInput*>(&e)) return "degenerate";
  if (dynamic_cast<const SolverFailure*>(&e)) return "solver";
  if (dynamic_cast<const TrainingFailure*>(&e)) return "training";
  return "io";
}

std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Residual operator learning experiments", "deltaphi"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string mode = "both", source = "eval";

  auto add = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_path, "Experiment config (default: $DELTAPHI_CONFIG)");
    sub->add_option("--seed", seed, "Override the config seed");
    return sub;
  };
  add("datagen", "Generate training, test and high-resolution test sets");
  add("index", "Retrieve the nearest training sample for every test input");
  add("suggest-k", "Suggest the auxiliary sampling range K");
  add("train", "Train direct and/or residual models")->add_option("--mode", mode, "direct, residual or both");
  add("eval", "Evaluate trained models on the test set")->add_option("--mode", mode, "direct, residual or both");
  add("eval-robust", "Repeat residual evaluation with random top-k auxiliaries");
  add("genres", "Zero-shot evaluation on the high-resolution test set")
      ->add_option("--mode", mode, "direct, residual or both");
  add("analyze-rank", "Mean output distance against similarity rank");
  add("analyze-pca", "PCA label distributions, direct against residual");
  add("compare", "Relative gain of residual over direct")->add_option("--source", source, "eval or genres");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "deltaphi: error: usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  if (config_path.empty()) {
    const char* env = std::getenv("DELTAPHI_CONFIG");
    if (!env || !*env) throw UsageError("no config given (use --config or DELTAPHI_CONFIG)");
    config_path = env;
  }
  Context ctx{load_config(config_path)};
  if (seed) {
    ctx.config.seed = *seed;
    ctx.config.train.seed = *seed;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  if (name == "datagen") cmd_datagen(ctx);
  else if (name == "index") cmd_index(ctx);
  else if (name == "suggest-k") cmd_suggest_k(ctx);
  else if (name == "train") cmd_train(ctx, modes_of(mode));
  else if (name == "eval") cmd_eval(ctx, modes_of(mode));
  else if (name == "eval-robust") cmd_eval_robust(ctx);
  else if (name == "genres") cmd_genres(ctx, modes_of(mode));
  else if (name == "analyze-rank") cmd_analyze_rank(ctx);
  else if (name == "analyze-pca") cmd_analyze_pca(ctx);
  else if (name == "compare") cmd_compare(ctx, source);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const std::exception& e) {
    err << "deltaphi: error: " << category_of(e) << ": " << one_line(e.what()) << "\n";
    return 1;
  }
}

}  // namespace dphi::cli
