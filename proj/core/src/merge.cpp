#include "adarank/merge.hpp"

#include <cmath>
#include <string>

#include "adarank/error.hpp"

namespace adarank {
namespace {

void check_lambda(const LambdaMap& lambda, std::size_t tasks, std::size_t layers,
                  const char* where) {
  if (lambda.num_tasks() != tasks || lambda.num_layers() != layers) {
    throw DimensionError(std::string(where) + ": lambda map is " +
                         std::to_string(lambda.num_tasks()) + "x" +
                         std::to_string(lambda.num_layers()) + ", expected " +
                         std::to_string(tasks) + "x" + std::to_string(layers));
  }
}

void check_bits(const MaskBits& bits, const SpectralSet& set) {
  if (bits.size() != set.num_tasks()) {
    throw DimensionError("merge: mask has " + std::to_string(bits.size()) +
                         " tasks, spectra have " + std::to_string(set.num_tasks()));
  }
  for (std::size_t t = 0; t < bits.size(); ++t) {
    if (bits[t].size() != set.num_layers()) {
      throw DimensionError("merge: mask task " + std::to_string(t) + " has " +
                           std::to_string(bits[t].size()) + " layers, expected " +
                           std::to_string(set.num_layers()));
    }
    for (std::size_t l = 0; l < bits[t].size(); ++l) {
      if (bits[t][l].size() != set.at(t, l).num_components()) {
        throw DimensionError("merge: mask size mismatch at task " + std::to_string(t) +
                             ", layer '" + set.layers[l] + "'");
      }
    }
  }
}

}  // namespace

LambdaMap LambdaMap::uniform(std::size_t tasks, std::size_t layers, double value) {
  LambdaMap m;
  m.tasks_ = tasks;
  m.layers_ = layers;
  m.values_.assign(tasks * layers, value);
  return m;
}

double LambdaMap::at(std::size_t task, std::size_t layer) const {
  if (task >= tasks_ || layer >= layers_) {
    throw DimensionError("lambda map: index (" + std::to_string(task) + ", " +
                         std::to_string(layer) + ") out of range");
  }
  return values_[task * layers_ + layer];
}

double& LambdaMap::at(std::size_t task, std::size_t layer) {
  if (task >= tasks_ || layer >= layers_) {
    throw DimensionError("lambda map: index (" + std::to_string(task) + ", " +
                         std::to_string(layer) + ") out of range");
  }
  return values_[task * layers_ + layer];
}

WeightMap merge_weight_average(const std::vector<WeightMap>& backbones) {
  if (backbones.empty()) throw ConfigError("weight average: no checkpoints");
  const auto& names = backbones.front().names();
  for (const auto& wm : backbones) {
    if (wm.names() != names) throw ConfigError("weight average: layer sets differ");
  }
  const double inv = 1.0 / static_cast<double>(backbones.size());
  WeightMap out;
  for (std::size_t l = 0; l < names.size(); ++l) {
    const Matrix& first = backbones.front().matrix(l);
    bool all_equal = true;
    for (std::size_t t = 1; all_equal && t < backbones.size(); ++t) {
      const Matrix& m = backbones[t].matrix(l);
      if (m.rows() != first.rows() || m.cols() != first.cols()) {
        throw DimensionError("weight average: layer '" + names[l] + "' shapes differ");
      }
      for (std::size_t e = 0; e < m.size(); ++e) {
        if (m.data()[e] != first.data()[e]) {
          all_equal = false;
          break;
        }
      }
    }
    if (all_equal) {
      // the mean of identical inputs is the input, bit for bit
      out.add(names[l], first);
      continue;
    }
    Matrix acc(first.rows(), first.cols());
    for (const auto& wm : backbones) acc += wm.matrix(l);
    acc *= inv;
    out.add(names[l], std::move(acc));
  }
  return out;
}

WeightMap merge_task_arithmetic(const WeightMap& base, const TaskVectorSet& vectors,
                                const LambdaMap& lambda) {
  const auto& names = vectors.per_task.front().names();
  check_lambda(lambda, vectors.num_tasks(), names.size(), "task arithmetic");
  WeightMap out;
  for (std::size_t l = 0; l < names.size(); ++l) {
    Matrix acc = base.at(names[l]);
    for (std::size_t t = 0; t < vectors.num_tasks(); ++t) {
      acc += lambda.at(t, l) * vectors.per_task[t].matrix(l);
    }
    out.add(names[l], std::move(acc));
  }
  return out;
}

WeightMap merge_masked(const WeightMap& base, const SpectralSet& set, const MaskBits& bits,
                       const LambdaMap& lambda) {
  check_bits(bits, set);
  check_lambda(lambda, set.num_tasks(), set.num_layers(), "masked merge");
  WeightMap out;
  for (std::size_t l = 0; l < set.num_layers(); ++l) {
    Matrix acc = base.at(set.layers[l]);
    for (std::size_t t = 0; t < set.num_tasks(); ++t) {
      const ThinSvd& f = set.at(t, l);
      std::vector<double> scale(f.num_components(), 0.0);
      for (std::size_t r = 0; r < scale.size(); ++r) {
        if (bits[t][l][r]) scale[r] = f.s[r];
      }
      acc += lambda.at(t, l) * scaled_outer_sum(f, scale);
    }
    out.add(set.layers[l], std::move(acc));
  }
  return out;
}

MaskBits topk_mask(const SpectralSet& set, double fraction, TopkRankRule rule) {
  if (rule == TopkRankRule::fraction && (fraction < 0.0 || fraction > 1.0)) {
    throw ConfigError("topk mask: fraction must lie in [0, 1]");
  }
  MaskBits bits(set.num_tasks(), std::vector<std::vector<std::uint8_t>>(set.num_layers()));
  for (std::size_t t = 0; t < set.num_tasks(); ++t) {
    for (std::size_t l = 0; l < set.num_layers(); ++l) {
      const std::size_t k = set.at(t, l).num_components();
      std::size_t keep = 0;
      if (rule == TopkRankRule::fraction) {
        keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(k)));
      } else {
        keep = k / set.num_tasks();
      }
      keep = std::min(keep, k);
      bits[t][l].assign(k, 0);
      for (std::size_t r = 0; r < keep; ++r) bits[t][l][r] = 1;
    }
  }
  return bits;
}

MaskBits full_mask(const SpectralSet& set) {
  MaskBits bits(set.num_tasks(), std::vector<std::vector<std::uint8_t>>(set.num_layers()));
  for (std::size_t t = 0; t < set.num_tasks(); ++t) {
    for (std::size_t l = 0; l < set.num_layers(); ++l) {
      bits[t][l].assign(set.at(t, l).num_components(), 1);
    }
  }
  return bits;
}

WeightMap merge_topk(const WeightMap& base, const SpectralSet& set, double fraction,
                     TopkRankRule rule, const LambdaMap& lambda) {
  return merge_masked(base, set, topk_mask(set, fraction, rule), lambda);
}

}  // namespace adarank
