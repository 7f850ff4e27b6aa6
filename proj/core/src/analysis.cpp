#include "adarank/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "adarank/csv.hpp"
#include "adarank/error.hpp"

namespace adarank {
namespace {

double task_loss(const ModelSpec& spec, const WeightMap& backbone, const Matrix& head,
                 const Dataset& data, LossKind kind) {
  const Matrix logits = forward(spec, backbone, head, data.inputs);
  if (kind == LossKind::entropy) return entropy_loss(logits);
  return cross_entropy_loss(logits, data.labels);
}

WeightMap with_layer(const WeightMap& base, const std::string& layer, const Matrix& replacement) {
  WeightMap out;
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (base.name(i) == layer) {
      out.add(base.name(i), replacement);
    } else {
      out.add(base.name(i), base.matrix(i));
    }
  }
  if (!out.contains(layer)) throw DimensionError("probe: unknown layer '" + layer + "'");
  return out;
}

void check_suite_inputs(const ModelSpec& spec, const std::vector<Matrix>& heads,
                        const std::vector<Dataset>& data) {
  if (heads.size() != spec.num_tasks() || data.size() != spec.num_tasks()) {
    throw DimensionError("probe: expected one head and one dataset per task");
  }
}

}  // namespace

double multitask_loss(const ModelSpec& spec, const WeightMap& backbone,
                      const std::vector<Matrix>& heads, const std::vector<Dataset>& data,
                      LossKind kind) {
  check_suite_inputs(spec, heads, data);
  if (kind == LossKind::cross_entropy) {
    for (const Dataset& d : data) {
      if (d.labels.size() != d.inputs.rows()) throw ConfigError("probe: labels missing");
    }
  }
  double total = 0.0;
  for (std::size_t t = 0; t < data.size(); ++t) {
    total += task_loss(spec, backbone, heads[t], data[t], kind);
  }
  return total;
}

LossProbe make_suite_loss_probe(const ModelSpec& spec, std::vector<Matrix> heads,
                                std::vector<Dataset> data, LossKind kind) {
  check_suite_inputs(spec, heads, data);
  auto heads_ptr = std::make_shared<std::vector<Matrix>>(std::move(heads));
  auto data_ptr = std::make_shared<std::vector<Dataset>>(std::move(data));
  LossProbe probe;
  probe.loss = [spec, heads_ptr, data_ptr, kind](const WeightMap& backbone) {
    return multitask_loss(spec, backbone, *heads_ptr, *data_ptr, kind);
  };
  probe.layer_grad = [spec, heads_ptr, data_ptr, kind](const WeightMap& backbone,
                                                       const std::string& layer) {
    Matrix acc;
    for (std::size_t t = 0; t < data_ptr->size(); ++t) {
      Batch batch;
      batch.inputs = (*data_ptr)[t].inputs;
      batch.task_id = static_cast<int>(t);
      if (kind == LossKind::cross_entropy) batch.labels = (*data_ptr)[t].labels;
      const GradientBundle bundle =
          backward_weight_grads(spec, backbone, (*heads_ptr)[t], batch, kind);
      const Matrix& g = bundle.per_layer.at(layer);
      if (t == 0) {
        acc = g;
      } else {
        acc += g;
      }
    }
    return acc;
  };
  return probe;
}

SweepReport component_sweep(const ModelSpec& spec, const TaskVectorSet& vectors,
                            const SpectralSet& set, const std::vector<Matrix>& heads,
                            const std::vector<Dataset>& data, const SweepSettings& settings) {
  const std::size_t tasks = set.num_tasks();
  check_suite_inputs(spec, heads, data);
  if (vectors.num_tasks() != tasks || spec.num_tasks() != tasks) {
    throw DimensionError("sweep: task count mismatch between vectors, spectra and model");
  }
  if (settings.excluded_task >= tasks) throw ConfigError("sweep: excluded task out of range");
  if (!(settings.top_fraction > 0.0) || settings.top_fraction > 1.0) {
    throw ConfigError("sweep: top fraction must lie in (0, 1]");
  }
  if (settings.stride == 0) throw ConfigError("sweep: stride must be positive");
  if (settings.loss == LossKind::cross_entropy) {
    for (const Dataset& d : data) {
      if (d.labels.size() != d.inputs.rows()) throw ConfigError("sweep: labels missing");
    }
  }

  const std::size_t i = settings.excluded_task;

  // Merge everything except task i once; every delta is measured against it.
  WeightMap merged;
  for (std::size_t n = 0; n < vectors.base.size(); ++n) {
    Matrix acc = vectors.base.matrix(n);
    for (std::size_t j = 0; j < tasks; ++j) {
      if (j == i) continue;
      acc += settings.lambda * vectors.per_task[j].at(vectors.base.name(n));
    }
    merged.add(vectors.base.name(n), std::move(acc));
  }

  std::vector<double> base_loss(tasks, 0.0);
  for (std::size_t t = 0; t < tasks; ++t) {
    base_loss[t] = task_loss(spec, merged, heads[t], data[t], settings.loss);
  }

  SweepReport report;
  report.excluded_task = i;
  report.lambda = settings.lambda;

  std::size_t offset = 0;
  for (std::size_t l = 0; l < set.num_layers(); ++l) {
    const ThinSvd& f = set.at(i, l);
    const std::size_t k = f.num_components();
    const auto window = static_cast<std::size_t>(
        std::floor(settings.top_fraction * static_cast<double>(k)));
    for (std::size_t r = 0; r < window; r += settings.stride) {
      const Matrix pert = reconstruct_components(f, {r});
      Matrix layer_w = merged.at(set.layers[l]);
      layer_w += settings.lambda * pert;
      const WeightMap probe_map = with_layer(merged, set.layers[l], layer_w);

      SweepRow row;
      row.component = offset + r;
      row.layer_index = l;
      row.local_index = r;
      row.sigma = f.s[r];
      row.per_task.resize(tasks, 0.0);
      for (std::size_t t = 0; t < tasks; ++t) {
        row.per_task[t] = task_loss(spec, probe_map, heads[t], data[t], settings.loss) -
                          base_loss[t];
        row.net += row.per_task[t];
      }
      report.rows.push_back(std::move(row));
    }
    offset += k;
  }
  return report;
}

void write_sweep_csv(const SweepReport& report, std::size_t num_tasks,
                     const std::filesystem::path& path) {
  CsvWriter csv(path);
  std::vector<std::string> header = {"task_excluded", "component", "sigma", "dL_total"};
  for (std::size_t t = 0; t < num_tasks; ++t) header.push_back("dL_task_" + std::to_string(t));
  csv.row(header);
  for (const SweepRow& row : report.rows) {
    std::vector<std::string> cells = {std::to_string(report.excluded_task),
                                      std::to_string(row.component), format_g17(row.sigma),
                                      format_g17(row.net)};
    for (double v : row.per_task) cells.push_back(format_g17(v));
    csv.row(cells);
  }
  csv.close();
}

double default_curvature_epsilon(const Matrix& layer_weights) {
  const double n = static_cast<double>(layer_weights.size());
  return 1e-4 * (1.0 + layer_weights.frobenius_norm() / std::sqrt(n));
}

TaylorRow taylor_terms(const LossProbe& probe, const WeightMap& theta,
                       const LayerComponent& comp, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("taylor: epsilon must be positive");
  const Matrix& w = theta.at(comp.layer);
  if (w.rows() != comp.direction.rows() || w.cols() != comp.direction.cols()) {
    throw DimensionError("taylor: direction shape does not match layer");
  }

  TaylorRow row;

  const Matrix g0 = probe.layer_grad(theta, comp.layer);
  row.first_order = comp.sigma * dot(g0, comp.direction);

  const Matrix g_plus =
      probe.layer_grad(with_layer(theta, comp.layer, w + epsilon * comp.direction), comp.layer);
  const Matrix g_minus =
      probe.layer_grad(with_layer(theta, comp.layer, w - epsilon * comp.direction), comp.layer);
  const Matrix hvp = (1.0 / (2.0 * epsilon)) * (g_plus - g_minus);
  row.quadratic = comp.sigma * comp.sigma * dot(comp.direction, hvp);

  const double base = probe.loss(theta);
  const double moved = probe.loss(with_layer(theta, comp.layer, w + comp.sigma * comp.direction));
  row.direct = moved - base;

  if (!std::isfinite(row.first_order) || !std::isfinite(row.quadratic) ||
      !std::isfinite(row.direct)) {
    throw NumericalError("taylor: non-finite term, epsilon " + std::to_string(epsilon));
  }
  return row;
}

void write_taylor_csv(const std::vector<TaylorRow>& rows, const std::filesystem::path& path) {
  CsvWriter csv(path);
  csv.row({"component", "first_order", "quadratic", "direct"});
  for (const TaylorRow& row : rows) {
    csv.row({std::to_string(row.component), format_g17(row.first_order),
             format_g17(row.quadratic), format_g17(row.direct)});
  }
  csv.close();
}

double joint_interaction(const LossProbe& probe, const WeightMap& theta,
                         const std::string& layer, const Matrix& s_i, const Matrix& s_j) {
  const Matrix& w = theta.at(layer);
  if (s_i.rows() != w.rows() || s_i.cols() != w.cols() || s_j.rows() != w.rows() ||
      s_j.cols() != w.cols()) {
    throw DimensionError("joint interaction: perturbation shape does not match layer");
  }
  // combined is formed before adding to the layer so the result cannot depend
  // on the argument order.
  const Matrix combined = s_i + s_j;
  const double l_joint = probe.loss(with_layer(theta, layer, w + combined));
  const double l_i = probe.loss(with_layer(theta, layer, w + s_i));
  const double l_j = probe.loss(with_layer(theta, layer, w + s_j));
  const double l_base = probe.loss(theta);
  return (l_joint + l_base) - (l_i + l_j);
}

double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("correlation: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) return 0.0;

  auto ranks = [n](const std::vector<double>& x) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&x](std::size_t p, std::size_t q) { return x[p] < x[q]; });
    std::vector<double> r(n, 0.0);
    std::size_t pos = 0;
    while (pos < n) {
      std::size_t end = pos;
      while (end + 1 < n && x[idx[end + 1]] == x[idx[pos]]) ++end;
      // ties share the average of the ranks they span
      const double avg = 0.5 * (static_cast<double>(pos) + static_cast<double>(end)) + 1.0;
      for (std::size_t q = pos; q <= end; ++q) r[idx[q]] = avg;
      pos = end + 1;
    }
    return r;
  };

  const std::vector<double> ra = ranks(a);
  const std::vector<double> rb = ranks(b);
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_a += ra[i];
    mean_b += rb[i];
  }
  mean_a /= static_cast<double>(n);
  mean_b /= static_cast<double>(n);
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = ra[i] - mean_a;
    const double db = rb[i] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  if (var_a == 0.0 || var_b == 0.0) return 0.0;
  return cov / std::sqrt(var_a * var_b);
}

RankReport rank_report(const MaskState& state, const SpectralSet& set, double energy_fraction) {
  if (state.logits.size() != set.num_tasks()) {
    throw DimensionError("rank report: task count mismatch");
  }
  RankReport report;
  report.energy_fraction = energy_fraction;
  std::vector<double> learned, intrinsic;
  for (std::size_t t = 0; t < set.num_tasks(); ++t) {
    if (state.logits[t].size() != set.num_layers()) {
      throw DimensionError("rank report: layer count mismatch");
    }
    for (std::size_t l = 0; l < set.num_layers(); ++l) {
      const std::vector<std::uint8_t> bits = binarize(state.logits[t][l], state.temperature);
      RankRow row;
      row.task = t;
      row.layer_index = l;
      for (std::uint8_t b : bits) row.learned += b;
      row.intrinsic = intrinsic_rank(set.at(t, l).s, energy_fraction);
      learned.push_back(static_cast<double>(row.learned));
      intrinsic.push_back(static_cast<double>(row.intrinsic));
      report.rows.push_back(row);
    }
  }
  report.correlation = spearman_correlation(learned, intrinsic);
  return report;
}

void write_rank_csv(const RankReport& report, const std::vector<std::string>& layers,
                    const std::filesystem::path& path) {
  CsvWriter csv(path);
  csv.row({"task", "layer", "learned_rank", "intrinsic_rank"});
  for (const RankRow& row : report.rows) {
    csv.row({std::to_string(row.task), layers.at(row.layer_index),
             std::to_string(row.learned), std::to_string(row.intrinsic)});
  }
  csv.row({"correlation", "", format_g17(report.correlation), ""});
  csv.close();
}

AdaptResult supervised_oracle_adapt(const ModelSpec& spec, const WeightMap& base,
                                    const SpectralSet& set, const std::vector<Matrix>& heads,
                                    const std::vector<Dataset>& data, MaskState state,
                                    AdamState adam, const AdaptSettings& settings) {
  std::vector<Matrix> inputs;
  std::vector<const std::vector<int>*> labels;
  inputs.reserve(data.size());
  labels.reserve(data.size());
  for (const Dataset& d : data) {
    if (d.labels.size() != d.inputs.rows()) throw ConfigError("oracle: labels missing");
    inputs.push_back(d.inputs);
    labels.push_back(&d.labels);
  }
  return adapt_engine(spec, base, set, heads, inputs, labels, LossKind::cross_entropy,
                      std::move(state), std::move(adam), settings);
}

void export_mask_heatmap(const MaskState& state, const std::vector<std::string>& layers,
                         const std::filesystem::path& path) {
  const MaskBits bits = binarize_all(state);
  std::size_t kmax = 0;
  for (const auto& task_bits : bits) {
    if (task_bits.size() != layers.size()) {
      throw DimensionError("heatmap: layer count mismatch");
    }
    for (const auto& layer_bits : task_bits) kmax = std::max(kmax, layer_bits.size());
  }

  CsvWriter csv(path);
  std::vector<std::string> header = {"task", "layer"};
  for (std::size_t r = 0; r < kmax; ++r) header.push_back("c" + std::to_string(r));
  csv.row(header);

  std::vector<std::size_t> cumulative(kmax, 0);
  for (std::size_t t = 0; t < bits.size(); ++t) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      std::vector<std::string> cells = {std::to_string(t), layers[l]};
      for (std::size_t r = 0; r < kmax; ++r) {
        if (r < bits[t][l].size()) {
          cells.push_back(bits[t][l][r] ? "1" : "0");
          cumulative[r] += bits[t][l][r];
        } else {
          cells.emplace_back();
        }
      }
      csv.row(cells);
    }
  }
  std::vector<std::string> summary = {"cumulative", ""};
  for (std::size_t r = 0; r < kmax; ++r) summary.push_back(std::to_string(cumulative[r]));
  csv.row(summary);
  csv.close();
}

}  // namespace adarank
