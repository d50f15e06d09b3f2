#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "deltaphi/error.hpp"
#include "deltaphi/log.hpp"
#include "deltaphi/model.hpp"

namespace dphi {
namespace {

// Keeps the shuffling stream independent of the initialization stream.
constexpr std::uint64_t kShuffleSalt = 0xD1B54A32D192ED03ULL;

ad::Tensor to_tensor(const GridField& f) {
  return ad::Tensor({f.channels(), f.height(), f.width()}, std::vector<double>(f.values().begin(), f.values().end()));
}

struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<std::vector<double>> m, v;
  std::size_t step = 0;

  explicit Adam(const std::vector<ad::Tensor>& params) {
    for (const auto& p : params) {
      m.emplace_back(p.size(), 0.0);
      v.emplace_back(p.size(), 0.0);
    }
  }

  void update(std::vector<ad::Tensor>& params, const std::vector<ad::Tensor>& grads, double lr, double weight_decay) {
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t p = 0; p < params.size(); ++p) {
      double* w = params[p].data();
      const double* g = grads[p].data();
      double* mp = m[p].data();
      double* vp = v[p].data();
      for (std::size_t k = 0; k < params[p].size(); ++k) {
        const double gk = g[k] + weight_decay * w[k];
        mp[k] = beta1 * mp[k] + (1.0 - beta1) * gk;
        vp[k] = beta2 * vp[k] + (1.0 - beta2) * gk * gk;
        w[k] -= lr * (mp[k] / c1) / (std::sqrt(vp[k] / c2) + eps);
      }
    }
  }
};

void check_model_io(const OperatorSpec& spec, const Dataset& data, TrainingMode mode, const AuxiliaryPolicy& policy,
                    const char* who) {
  const std::size_t cin = data.input_shape().channels, cout = data.output_shape().channels;
  const std::size_t expected = mode == TrainingMode::direct ? cin : assembled_channels(policy, cin, cout);
  DPHI_REQUIRE(spec.in_channels == expected,
               std::string(who) + ": model expects " + std::to_string(spec.in_channels) + " input channels but " +
                   std::string(to_string(mode)) + " mode assembles " + std::to_string(expected));
  DPHI_REQUIRE(spec.out_channels == cout, std::string(who) + ": model output channels do not match the dataset");
}

void check_source(const AuxiliarySource& source, const char* who) {
  DPHI_REQUIRE(source.train && source.index, std::string(who) + ": residual mode needs the training set and its index");
  DPHI_REQUIRE(source.index->size() == source.train->size(),
               std::string(who) + ": index was not built over the training set");
}

double cosine_score(const RetrievalIndex& index, const GridField& query_on_index_grid, std::size_t id) {
  return distance(flatten_normalized(query_on_index_grid).values, index.vector(id), SimilarityMetric::cosine_distance)
      .value;
}

EvalMetrics finish(EvalMetrics m) {
  m.mean = m.per_sample.empty()
               ? 0.0
               : std::accumulate(m.per_sample.begin(), m.per_sample.end(), 0.0) / static_cast<double>(m.per_sample.size());
  return m;
}

}  // namespace

void validate(const TrainConfig& c) {
  DPHI_REQUIRE(c.epochs > 0 && c.batch_size > 0 && c.lr_step > 0 && c.k > 0,
               "TrainConfig: epochs, batch_size, lr_step and k must be positive");
  DPHI_REQUIRE(c.learning_rate > 0.0 && c.lr_gamma > 0.0 && c.weight_decay >= 0.0,
               "TrainConfig: learning_rate and lr_gamma must be positive, weight_decay nonnegative");
  validate(c.policy);
}

double learning_rate_at(const TrainConfig& c, std::size_t epoch) {
  return c.learning_rate * std::pow(c.lr_gamma, static_cast<double>(epoch / c.lr_step));
}

ad::Var batch_loss(ad::Tape& tape, const OperatorModel& model, std::span<const ad::Var> params,
                   std::span<const GridField> inputs, std::span<const GridField> truths,
                   std::span<const GridField> aux_solutions) {
  DPHI_REQUIRE(!inputs.empty() && inputs.size() == truths.size(), "batch_loss: inputs and truths must pair up");
  DPHI_REQUIRE(aux_solutions.empty() || aux_solutions.size() == inputs.size(),
               "batch_loss: one auxiliary solution per sample");
  ad::Var total{};
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    const double norm = truths[b].l2_norm();
    if (norm == 0.0) throw DegenerateInput("batch_loss: zero-norm truth");
    const GridField* aux = aux_solutions.empty() ? nullptr : &aux_solutions[b];
    const ad::Var pred = forward_graph(tape, model, params, inputs[b], aux);
    const ad::Var err = ad::scale(ad::l2_norm(pred - tape.constant(to_tensor(truths[b]))), 1.0 / norm);
    total = b == 0 ? err : total + err;
  }
  return ad::scale(total, 1.0 / static_cast<double>(inputs.size()));
}

TrainResult train(const Dataset& train_set, const Dataset& test_set, const OperatorSpec& spec,
                  const TrainConfig& config, const RetrievalIndex* index) {
  validate(config);
  DPHI_REQUIRE(!train_set.empty(), "train: training set is empty");
  DPHI_REQUIRE(!test_set.empty(), "train: test set is empty");
  const bool residual = config.mode == TrainingMode::residual;
  const AuxiliarySource source{&train_set, index};
  if (residual) check_source(source, "train");
  check_model_io(spec, train_set, config.mode, config.policy, "train");
  validate_resolution(spec, train_set.input_shape().height, train_set.input_shape().width);

  const auto start = std::chrono::steady_clock::now();
  TrainResult result{init_model(spec, config.seed), {}};
  OperatorModel& model = result.model;
  TrainReport& report = result.report;
  report.seed = config.seed;
  report.spec = spec;
  report.config = config;

  const std::size_t n = train_set.size();
  std::mt19937_64 rng(config.seed ^ kShuffleSalt);
  Adam adam(model.params);
  std::vector<GridField> inputs, truths = train_set.outputs(), aux_solutions;
  if (!residual) inputs = train_set.inputs();
  std::vector<std::size_t> order(n);
  if (!residual) model.normalizer = fit_normalizer(inputs, truths, config.mode);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = learning_rate_at(config, epoch);
    if (residual && (epoch == 0 || config.resample_each_epoch)) {
      inputs.clear();
      aux_solutions.clear();
      std::vector<GridField> residuals;
      for (const auto& pair : build_residual_dataset(train_set, *index, config.k, config.policy, rng)) {
        inputs.push_back(assemble_input(pair, config.policy));
        aux_solutions.push_back(pair.aux_solution);
        residuals.push_back(*pair.target_residual);
      }
      // Statistics come from the first draw and stay fixed for the run.
      if (epoch == 0) model.normalizer = fit_normalizer(inputs, residuals, config.mode);
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    for (std::size_t first = 0, batch = 0; first < n; first += config.batch_size, ++batch) {
      const std::size_t count = std::min(config.batch_size, n - first);
      std::vector<GridField> bx, by, baux;
      for (std::size_t k = first; k < first + count; ++k) {
        bx.push_back(inputs[order[k]]);
        by.push_back(truths[order[k]]);
        if (residual) baux.push_back(aux_solutions[order[k]]);
      }
      ad::Tape tape;
      std::vector<ad::Var> leaves;
      for (const auto& p : model.params) leaves.push_back(tape.parameter(p));
      const ad::Var loss = batch_loss(tape, model, leaves, bx, by, baux);
      const double value = loss.value()[0];
      if (!std::isfinite(value))
        throw TrainingFailure("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch) + ", lr " + std::to_string(lr));
      tape.backward(loss);
      std::vector<ad::Tensor> grads;
      grads.reserve(leaves.size());
      for (const auto& leaf : leaves) grads.push_back(tape.grad(leaf));
      adam.update(model.params, grads, lr, config.weight_decay);
      loss_sum += value * static_cast<double>(count);
    }

    EpochRecord record{epoch, lr, loss_sum / static_cast<double>(n), std::nullopt};
    const bool last = epoch + 1 == config.epochs;
    if (last || (config.eval_every > 0 && (epoch + 1) % config.eval_every == 0)) {
      record.test_error = evaluate(model, test_set, source, config.mode, config.policy).mean;
      log_info("epoch " + std::to_string(epoch + 1) + "/" + std::to_string(config.epochs) + " train " +
               std::to_string(record.train_loss) + " test " + std::to_string(*record.test_error));
    }
    report.epochs.push_back(record);
  }
  report.final_test_error = *report.epochs.back().test_error;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

EvalMetrics evaluate(const OperatorModel& model, const Dataset& test_set, AuxiliarySource source, TrainingMode mode,
                     const AuxiliaryPolicy& policy, AuxRule rule, std::mt19937_64* rng) {
  EvalMetrics m;
  if (mode == TrainingMode::direct) {
    for (const auto& s : test_set) m.per_sample.push_back(relative_l2(forward(model, s.input, mode), s.output));
    return finish(std::move(m));
  }
  check_source(source, "evaluate");
  DPHI_REQUIRE(rule.kind == AuxRule::Kind::best || rng != nullptr, "evaluate: random_topk needs an rng");
  DPHI_REQUIRE(rule.k > 0, "evaluate: random_topk needs k > 0");
  const RetrievalIndex& index = *source.index;
  for (const auto& s : test_set) {
    Retrieval hit;
    if (rule.kind == AuxRule::Kind::best) {
      hit = retrieve_inference(index, s.input);
    } else {
      const RankedNeighbors ranked = index.rank_neighbors(s.input);
      const std::size_t top = std::min(rule.k, ranked.items.size());
      std::uniform_int_distribution<std::size_t> pick(0, top - 1);
      const Neighbor& nb = ranked.items[pick(*rng)];
      hit = {nb.id, nb.distance, ranked.degenerate_query};
    }
    const TrajectorySample& aux = (*source.train)[hit.id];
    const auto pair = make_residual_pair(s.input, nullptr, aux, cosine_score(index, s.input, hit.id), policy);
    const GridField pred = forward(model, assemble_input(pair, policy), mode, &pair.aux_solution);
    m.per_sample.push_back(relative_l2(pred, s.output));
    m.aux_ids.push_back(hit.id);
    m.degenerate.push_back(hit.degenerate);
  }
  return finish(std::move(m));
}

EvalMetrics evaluate_cross_resolution(const OperatorModel& model, const Dataset& test_set, AuxiliarySource source,
                                      TrainingMode mode, const AuxiliaryPolicy& policy) {
  DPHI_REQUIRE(model.spec.architecture == Architecture::fno,
               "evaluate_cross_resolution: resnet kernels are tied to the training grid spacing; only fno weights "
               "transfer across resolutions");
  if (mode == TrainingMode::direct) return evaluate(model, test_set, source, mode, policy);
  check_source(source, "evaluate_cross_resolution");
  const RetrievalIndex& index = *source.index;
  EvalMetrics m;
  for (const auto& s : test_set) {
    const Retrieval hit = retrieve_cross_resolution(index, s.input);
    const TrajectorySample& coarse = (*source.train)[hit.id];
    const TrajectorySample aux{integrate_cross_resolution(coarse.input, s.input.shape()),
                               integrate_cross_resolution(coarse.output, s.output.shape()), coarse.id};
    const double score = cosine_score(index, fourier_resample(s.input, index.shape()), hit.id);
    const auto pair = make_residual_pair(s.input, nullptr, aux, score, policy);
    const GridField pred = forward(model, assemble_input(pair, policy), mode, &pair.aux_solution);
    m.per_sample.push_back(relative_l2(pred, s.output));
    m.aux_ids.push_back(hit.id);
    m.degenerate.push_back(hit.degenerate);
  }
  return finish(std::move(m));
}

}  // namespace dphi
