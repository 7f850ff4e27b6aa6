#include "adarank/adapt.hpp"

#include <cmath>
#include <string>

#include "adarank/csv.hpp"
#include "adarank/error.hpp"
#include "adarank/rng.hpp"

namespace adarank {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_state(const MaskState& state, const SpectralSet& set) {
  if (state.logits.size() != set.num_tasks()) {
    throw DimensionError("mask state: " + std::to_string(state.logits.size()) +
                         " tasks, spectra have " + std::to_string(set.num_tasks()));
  }
  for (std::size_t t = 0; t < state.logits.size(); ++t) {
    if (state.logits[t].size() != set.num_layers()) {
      throw DimensionError("mask state: task " + std::to_string(t) + " has " +
                           std::to_string(state.logits[t].size()) + " layers, expected " +
                           std::to_string(set.num_layers()));
    }
    for (std::size_t l = 0; l < state.logits[t].size(); ++l) {
      if (state.logits[t][l].size() != set.at(t, l).num_components()) {
        throw DimensionError("mask state: component count mismatch at task " +
                             std::to_string(t) + ", layer '" + set.layers[l] + "'");
      }
    }
  }
  if (state.lambda.num_tasks() != set.num_tasks() ||
      state.lambda.num_layers() != set.num_layers()) {
    throw DimensionError("mask state: lambda map shape mismatch");
  }
  if (!(state.temperature > 0.0)) throw ConfigError("mask state: temperature must be positive");
  if (state.range_restriction &&
      (*state.range_restriction <= 0.0 || *state.range_restriction > 1.0)) {
    throw ConfigError("mask state: range restriction must lie in (0, 1]");
  }
}

// Cyclic pass over a shuffled index set, reshuffled at each wrap.
struct Sampler {
  std::vector<int> order;
  std::size_t pos = 0;
  Rng rng;

  Sampler(std::size_t n, std::uint64_t seed) : rng(seed) {
    order.resize(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);
  }

  int draw() {
    if (pos == order.size()) {
      rng.shuffle(order);
      pos = 0;
    }
    return order[pos++];
  }
};

Matrix gather_batch(const Matrix& inputs, Sampler& sampler, std::size_t batch_size,
                    std::vector<std::size_t>* picked) {
  const std::size_t bs = std::min(batch_size, inputs.rows());
  Matrix out(bs, inputs.cols());
  for (std::size_t r = 0; r < bs; ++r) {
    const auto i = static_cast<std::size_t>(sampler.draw());
    if (picked) picked->push_back(i);
    for (std::size_t j = 0; j < inputs.cols(); ++j) out(r, j) = inputs(i, j);
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> binarize(const std::vector<double>& logits, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("binarize: temperature must be positive");
  std::vector<std::uint8_t> bits(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    // sigmoid(x / T) >= 0.5 exactly when x >= 0; zero lands on the active side.
    bits[i] = logits[i] >= 0.0 ? 1 : 0;
  }
  return bits;
}

MaskBits binarize_all(const MaskState& state) {
  MaskBits bits(state.logits.size());
  for (std::size_t t = 0; t < state.logits.size(); ++t) {
    bits[t].resize(state.logits[t].size());
    for (std::size_t l = 0; l < state.logits[t].size(); ++l) {
      bits[t][l] = binarize(state.logits[t][l], state.temperature);
    }
  }
  return bits;
}

std::vector<double> ste_backward(const std::vector<double>& upstream,
                                 const std::vector<double>& logits, double temperature) {
  if (upstream.size() != logits.size()) {
    throw DimensionError("ste_backward: upstream size " + std::to_string(upstream.size()) +
                         " vs logits size " + std::to_string(logits.size()));
  }
  if (!(temperature > 0.0)) throw ConfigError("ste_backward: temperature must be positive");
  std::vector<double> grad(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double s = sigmoid(logits[i] / temperature);
    grad[i] = upstream[i] * s * (1.0 - s) / temperature;
  }
  return grad;
}

std::vector<double> component_couplings(const Matrix& weight_grad, const ThinSvd& svd) {
  if (weight_grad.rows() != svd.u.rows() || weight_grad.cols() != svd.v.rows()) {
    throw DimensionError("component_couplings: gradient is " +
                         std::to_string(weight_grad.rows()) + "x" +
                         std::to_string(weight_grad.cols()) + ", factors expect " +
                         std::to_string(svd.u.rows()) + "x" + std::to_string(svd.v.rows()));
  }
  const std::size_t k = svd.num_components();
  // diag(U^T G V) scaled by s, via Gv = G V then column dots with U.
  const Matrix gv = matmul(weight_grad, svd.v);
  std::vector<double> out(k, 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < svd.u.rows(); ++i) acc += svd.u(i, r) * gv(i, r);
    out[r] = svd.s[r] * acc;
  }
  return out;
}

std::vector<double> mask_grad_from_weight_grad(const Matrix& weight_grad, const ThinSvd& svd,
                                               double lambda) {
  std::vector<double> c = component_couplings(weight_grad, svd);
  for (double& x : c) x *= lambda;
  return c;
}

double lambda_grad_from_weight_grad(const Matrix& weight_grad, const ThinSvd& svd,
                                    const std::vector<std::uint8_t>& bits) {
  if (bits.size() != svd.num_components()) {
    throw DimensionError("lambda_grad: mask size mismatch");
  }
  const std::vector<double> c = component_couplings(weight_grad, svd);
  double acc = 0.0;
  for (std::size_t r = 0; r < c.size(); ++r) {
    if (bits[r]) acc += c[r];
  }
  return acc;
}

MaskState init_mask(InitPolicy policy, const SpectralSet& set, double temperature,
                    const LambdaMap& lambda, double fraction) {
  if (!(temperature > 0.0)) throw ConfigError("init_mask: temperature must be positive");
  if (policy == InitPolicy::top_fraction && (fraction < 0.0 || fraction > 1.0)) {
    throw ConfigError("init_mask: fraction must lie in [0, 1]");
  }
  MaskState state;
  state.temperature = temperature;
  state.lambda = lambda;
  const double hi = kInitLogitMargin * temperature;
  const double lo = -hi;
  state.logits.resize(set.num_tasks());
  for (std::size_t t = 0; t < set.num_tasks(); ++t) {
    state.logits[t].resize(set.num_layers());
    for (std::size_t l = 0; l < set.num_layers(); ++l) {
      const std::size_t k = set.at(t, l).num_components();
      std::size_t keep = k;
      if (policy == InitPolicy::top_fraction) {
        keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(k)));
      } else if (policy == InitPolicy::per_task_share) {
        keep = k / set.num_tasks();
      }
      keep = std::min(keep, k);
      state.logits[t][l].assign(k, lo);
      for (std::size_t r = 0; r < keep; ++r) state.logits[t][l][r] = hi;
    }
  }
  return state;
}

void AdamState::resize(std::size_t n) {
  m.assign(n, 0.0);
  v.assign(n, 0.0);
  step = 0;
}

void AdamState::update(std::vector<double>& x, const std::vector<double>& g) {
  if (x.size() != m.size() || g.size() != m.size()) {
    throw DimensionError("adam: learnable vector size changed mid-run");
  }
  ++step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
    x[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.epsilon);
  }
}

UnlabeledStream make_stream(const Dataset& test, double data_fraction) {
  if (!(data_fraction > 0.0) || data_fraction > 1.0) {
    throw ConfigError("stream: data fraction must lie in (0, 1]");
  }
  const std::size_t total = test.inputs.rows();
  if (total == 0) throw ConfigError("stream: empty test split");
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(data_fraction * static_cast<double>(total))));
  UnlabeledStream stream;
  stream.inputs = Matrix(keep, test.inputs.cols());
  for (std::size_t i = 0; i < keep; ++i) {
    for (std::size_t j = 0; j < test.inputs.cols(); ++j) {
      stream.inputs(i, j) = test.inputs(i, j);
    }
  }
  return stream;
}

AdaptResult adapt_engine(const ModelSpec& spec, const WeightMap& base, const SpectralSet& set,
                         const std::vector<Matrix>& heads, const std::vector<Matrix>& inputs,
                         const std::vector<const std::vector<int>*>& labels, LossKind kind,
                         MaskState state, AdamState adam, const AdaptSettings& settings) {
  check_state(state, set);
  const std::size_t tasks = set.num_tasks();
  const std::size_t layers = set.num_layers();
  if (spec.num_tasks() != tasks) throw DimensionError("adapt: model/spectra task mismatch");
  if (heads.size() != tasks || inputs.size() != tasks || labels.size() != tasks) {
    throw DimensionError("adapt: per-task inputs incomplete");
  }
  for (const Matrix& in : inputs) {
    if (in.rows() == 0) throw ConfigError("adapt: empty stream");
  }
  if (settings.batch_size == 0) throw ConfigError("adapt: batch size must be positive");

  // Range restriction pins trailing components to the inactive side up front.
  std::vector<std::vector<std::size_t>> allowed(tasks, std::vector<std::size_t>(layers));
  for (std::size_t t = 0; t < tasks; ++t) {
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t k = set.at(t, l).num_components();
      std::size_t a = k;
      if (state.range_restriction) {
        a = std::min<std::size_t>(
            k, static_cast<std::size_t>(
                   std::floor(*state.range_restriction * static_cast<double>(k))));
        const double lo = -kInitLogitMargin * state.temperature;
        for (std::size_t r = a; r < k; ++r) state.logits[t][l][r] = lo;
      }
      allowed[t][l] = a;
    }
  }

  // Learnable layout: mask logits task-major, then lambdas task-major.
  struct Slot {
    std::size_t t, l, r;
    bool is_lambda;
  };
  std::vector<Slot> slots;
  if (state.learn_mask) {
    for (std::size_t t = 0; t < tasks; ++t) {
      for (std::size_t l = 0; l < layers; ++l) {
        for (std::size_t r = 0; r < allowed[t][l]; ++r) slots.push_back({t, l, r, false});
      }
    }
  }
  if (state.learn_lambda) {
    for (std::size_t t = 0; t < tasks; ++t) {
      for (std::size_t l = 0; l < layers; ++l) slots.push_back({t, l, 0, true});
    }
  }
  if (adam.m.empty() && adam.v.empty()) {
    adam.resize(slots.size());
  } else if (adam.m.size() != slots.size()) {
    throw DimensionError("adapt: adam state does not match learnable count");
  }

  std::vector<Sampler> samplers;
  samplers.reserve(tasks);
  for (std::size_t t = 0; t < tasks; ++t) {
    samplers.emplace_back(inputs[t].rows(), Rng::mix(Rng::mix(settings.seed, 0x57a7eULL), t));
  }

  AdaptTrace trace;
  const double reduction_scale =
      settings.reduction == TaskReduction::mean ? 1.0 / static_cast<double>(tasks) : 1.0;

  const std::size_t loop_steps = std::max<std::size_t>(settings.steps, 1);
  for (std::size_t step = 0; step < loop_steps; ++step) {
    const MaskBits bits = binarize_all(state);
    const WeightMap merged = merge_masked(base, set, bits, state.lambda);

    double total = 0.0;
    std::vector<double> per_task(tasks, 0.0);
    std::vector<Matrix> grad_sum;
    grad_sum.reserve(layers);
    for (std::size_t l = 0; l < layers; ++l) {
      const Matrix& w = base.at(set.layers[l]);
      grad_sum.emplace_back(w.rows(), w.cols());
    }

    for (std::size_t t = 0; t < tasks; ++t) {
      std::vector<std::size_t> picked;
      Batch batch;
      batch.inputs = gather_batch(inputs[t], samplers[t], settings.batch_size, &picked);
      batch.task_id = static_cast<int>(t);
      if (kind == LossKind::cross_entropy) {
        if (labels[t] == nullptr) throw ConfigError("adapt: labels required for this loss");
        std::vector<int> batch_labels(picked.size());
        for (std::size_t i = 0; i < picked.size(); ++i) batch_labels[i] = (*labels[t])[picked[i]];
        batch.labels = std::move(batch_labels);
      }
      const GradientBundle bundle = backward_weight_grads(spec, merged, heads[t], batch, kind);
      for (std::size_t l = 0; l < layers; ++l) {
        grad_sum[l] += bundle.per_layer.at(set.layers[l]);
      }
      // Updates ride the minibatch gradient, but the trace logs the loss over
      // the whole stream: that is the objective, not sampling noise, and it is
      // what descent statements about the trace are checked against.
      const Matrix stream_logits = forward(spec, merged, heads[t], inputs[t]);
      const double stream_loss = kind == LossKind::entropy
                                     ? entropy_loss(stream_logits)
                                     : cross_entropy_loss(stream_logits, *labels[t]);
      per_task[t] = stream_loss;
      total += stream_loss;
    }
    total *= reduction_scale;

    AdaptRecord record;
    record.step = step;
    record.total_loss = total;
    record.per_task_loss = per_task;
    record.active_bits.resize(tasks, std::vector<std::size_t>(layers, 0));
    for (std::size_t t = 0; t < tasks; ++t) {
      for (std::size_t l = 0; l < layers; ++l) {
        std::size_t count = 0;
        for (std::uint8_t b : bits[t][l]) count += b;
        record.active_bits[t][l] = count;
      }
    }
    trace.records.push_back(std::move(record));

    if (!std::isfinite(total)) throw AdaptDivergence(step, trace);
    if (settings.steps == 0) break;  // initial-loss probe only
    if (slots.empty()) continue;     // frozen ablation: nothing to update

    if (reduction_scale != 1.0) {
      for (Matrix& g : grad_sum) g *= reduction_scale;
    }

    std::vector<double> x(slots.size(), 0.0);
    std::vector<double> grad(slots.size(), 0.0);
    std::size_t cursor = 0;
    if (state.learn_mask) {
      for (std::size_t t = 0; t < tasks; ++t) {
        for (std::size_t l = 0; l < layers; ++l) {
          const std::vector<double> upstream =
              mask_grad_from_weight_grad(grad_sum[l], set.at(t, l), state.lambda.at(t, l));
          const std::vector<double> logit_grad =
              ste_backward(upstream, state.logits[t][l], state.temperature);
          for (std::size_t r = 0; r < allowed[t][l]; ++r, ++cursor) {
            x[cursor] = state.logits[t][l][r];
            grad[cursor] = logit_grad[r];
          }
        }
      }
    }
    if (state.learn_lambda) {
      for (std::size_t t = 0; t < tasks; ++t) {
        for (std::size_t l = 0; l < layers; ++l, ++cursor) {
          x[cursor] = state.lambda.at(t, l);
          grad[cursor] = lambda_grad_from_weight_grad(grad_sum[l], set.at(t, l), bits[t][l]);
        }
      }
    }
    adam.update(x, grad);
    cursor = 0;
    if (state.learn_mask) {
      for (std::size_t t = 0; t < tasks; ++t) {
        for (std::size_t l = 0; l < layers; ++l) {
          for (std::size_t r = 0; r < allowed[t][l]; ++r, ++cursor) {
            state.logits[t][l][r] = x[cursor];
          }
        }
      }
    }
    if (state.learn_lambda) {
      for (std::size_t t = 0; t < tasks; ++t) {
        for (std::size_t l = 0; l < layers; ++l, ++cursor) state.lambda.at(t, l) = x[cursor];
      }
    }
  }

  return {std::move(state), std::move(trace)};
}

AdaptResult adapt(const ModelSpec& spec, const WeightMap& base, const SpectralSet& set,
                  const std::vector<Matrix>& heads, const std::vector<UnlabeledStream>& streams,
                  MaskState state, AdamState adam, const AdaptSettings& settings) {
  if (settings.steps == 0) throw ConfigError("adapt: steps must be at least 1");
  std::vector<Matrix> inputs;
  inputs.reserve(streams.size());
  for (const auto& s : streams) inputs.push_back(s.inputs);
  const std::vector<const std::vector<int>*> no_labels(streams.size(), nullptr);
  return adapt_engine(spec, base, set, heads, inputs, no_labels, LossKind::entropy,
                      std::move(state), std::move(adam), settings);
}

void save_mask_state(const MaskState& state, const std::vector<std::string>& layers,
                     const std::filesystem::path& path, const nlohmann::json& manifest_extra) {
  const std::size_t tasks = state.logits.size();
  Checkpoint ckpt;
  for (std::size_t t = 0; t < tasks; ++t) {
    if (state.logits[t].size() != layers.size()) {
      throw DimensionError("mask save: layer count mismatch");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Matrix row(1, state.logits[t][l].size());
      for (std::size_t r = 0; r < state.logits[t][l].size(); ++r) row(0, r) = state.logits[t][l][r];
      ckpt.backbone.add("logits." + std::to_string(t) + "." + layers[l], std::move(row));
    }
  }
  for (std::size_t t = 0; t < tasks; ++t) {
    Matrix row(1, layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) row(0, l) = state.lambda.at(t, l);
    ckpt.backbone.add("lambda." + std::to_string(t), std::move(row));
  }
  ckpt.manifest = manifest_extra;
  ckpt.manifest["mask"] = {
      {"temperature", state.temperature},
      {"learn_mask", state.learn_mask},
      {"learn_lambda", state.learn_lambda},
      {"range_restriction",
       state.range_restriction ? nlohmann::json(*state.range_restriction) : nlohmann::json()},
      {"layers", layers},
      {"num_tasks", tasks}};
  save_checkpoint(ckpt, path);
}

MaskState load_mask_state(const std::filesystem::path& path, std::vector<std::string>* layers_out) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (!ckpt.manifest.contains("mask")) {
    throw IoError("mask file: manifest block missing in '" + path.string() + "'");
  }
  const auto& meta = ckpt.manifest.at("mask");
  const auto layers = meta.at("layers").get<std::vector<std::string>>();
  const auto tasks = meta.at("num_tasks").get<std::size_t>();

  MaskState state;
  state.temperature = meta.at("temperature").get<double>();
  state.learn_mask = meta.at("learn_mask").get<bool>();
  state.learn_lambda = meta.at("learn_lambda").get<bool>();
  if (!meta.at("range_restriction").is_null()) {
    state.range_restriction = meta.at("range_restriction").get<double>();
  }
  state.logits.resize(tasks);
  state.lambda = LambdaMap::uniform(tasks, layers.size(), 0.0);
  for (std::size_t t = 0; t < tasks; ++t) {
    state.logits[t].resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const Matrix& row = ckpt.backbone.at("logits." + std::to_string(t) + "." + layers[l]);
      state.logits[t][l].assign(row.data(), row.data() + row.size());
    }
    const Matrix& lrow = ckpt.backbone.at("lambda." + std::to_string(t));
    for (std::size_t l = 0; l < layers.size(); ++l) state.lambda.at(t, l) = lrow(0, l);
  }
  if (layers_out) *layers_out = layers;
  return state;
}

void write_trace_csv(const AdaptTrace& trace, std::size_t num_tasks,
                     const std::vector<std::string>& layers, const std::filesystem::path& path,
                     const std::string& value_label) {
  CsvWriter csv(path);
  std::vector<std::string> header = {"step", "total_" + value_label};
  for (std::size_t t = 0; t < num_tasks; ++t) {
    header.push_back(value_label + "_task_" + std::to_string(t));
  }
  for (std::size_t t = 0; t < num_tasks; ++t) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      header.push_back("active_bits_task_" + std::to_string(t) + "_layer_" + std::to_string(l));
    }
  }
  csv.row(header);
  for (const AdaptRecord& rec : trace.records) {
    std::vector<std::string> cells = {std::to_string(rec.step), format_g17(rec.total_loss)};
    for (double v : rec.per_task_loss) cells.push_back(format_g17(v));
    for (const auto& task_bits : rec.active_bits) {
      for (std::size_t count : task_bits) cells.push_back(std::to_string(count));
    }
    csv.row(cells);
  }
  csv.close();
}

}  // namespace adarank
