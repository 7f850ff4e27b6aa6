#include "adarank/spectral.hpp"

#include <cmath>
#include <string>

#include "adarank/error.hpp"
#include "adarank/parallel.hpp"

namespace adarank {
namespace {

void check_layer_compatibility(const std::vector<WeightMap>& backbones) {
  if (backbones.empty()) throw ConfigError("task vectors: no checkpoints given");
  const auto& names = backbones.front().names();
  for (const auto& wm : backbones) {
    if (wm.names() != names) {
      throw ConfigError("task vectors: checkpoints disagree on layer names or order");
    }
    for (std::size_t l = 0; l < names.size(); ++l) {
      if (!wm.matrix(l).same_shape(backbones.front().matrix(l))) {
        throw DimensionError("task vectors: shape mismatch in layer '" + names[l] + "'");
      }
    }
  }
}

// Nearest frame with unit singular values: u v^T of the concatenation's SVD.
Matrix orthonormal_frame(const Matrix& concat) {
  const ThinSvd svd = svd_thin(concat);
  return matmul(svd.u, transpose(svd.v));
}

}  // namespace

TaskVectorSet build_task_vectors(const std::vector<WeightMap>& finetuned, BaseKind kind,
                                 const WeightMap* pretrained) {
  check_layer_compatibility(finetuned);
  const auto& names = finetuned.front().names();

  TaskVectorSet out;
  out.base_kind = kind;
  if (kind == BaseKind::pretrained) {
    if (pretrained == nullptr) {
      throw ConfigError("task vectors: pretrained base required");
    }
    if (pretrained->names() != names) {
      throw ConfigError("task vectors: pretrained base disagrees on layer names");
    }
    out.base = *pretrained;
  } else {
    const double inv = 1.0 / static_cast<double>(finetuned.size());
    for (std::size_t l = 0; l < names.size(); ++l) {
      Matrix mean(finetuned.front().matrix(l).rows(), finetuned.front().matrix(l).cols());
      for (const auto& wm : finetuned) mean += wm.matrix(l);
      mean *= inv;
      out.base.add(names[l], std::move(mean));
    }
  }

  for (const auto& wm : finetuned) {
    WeightMap tau;
    for (std::size_t l = 0; l < names.size(); ++l) {
      tau.add(names[l], wm.matrix(l) - out.base.at(names[l]));
    }
    out.per_task.push_back(std::move(tau));
  }
  return out;
}

SpectralSet decompose(const TaskVectorSet& vectors, bool whiten, int workers) {
  if (vectors.per_task.empty()) throw ConfigError("decompose: empty task vector set");
  const std::size_t tasks = vectors.num_tasks();
  const auto& names = vectors.per_task.front().names();
  const std::size_t layers = names.size();

  SpectralSet set;
  set.layers = names;
  set.whitened = whiten;
  set.per_task.assign(tasks, std::vector<ThinSvd>(layers));

  parallel_for(tasks * layers, workers, [&](std::size_t unit) {
    const std::size_t t = unit / layers;
    const std::size_t l = unit % layers;
    set.per_task[t][l] = svd_thin(vectors.per_task[t].matrix(l));
  });

  if (!whiten) return set;

  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t k = set.per_task.front()[l].num_components();
    const std::size_t rows_u = set.per_task.front()[l].u.rows();
    const std::size_t rows_v = set.per_task.front()[l].v.rows();

    Matrix concat_u(rows_u, tasks * k), concat_v(rows_v, tasks * k);
    for (std::size_t t = 0; t < tasks; ++t) {
      const ThinSvd& f = set.per_task[t][l];
      for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t i = 0; i < rows_u; ++i) concat_u(i, t * k + j) = f.u(i, j);
        for (std::size_t i = 0; i < rows_v; ++i) concat_v(i, t * k + j) = f.v(i, j);
      }
    }
    const Matrix white_u = orthonormal_frame(concat_u);
    const Matrix white_v = orthonormal_frame(concat_v);
    for (std::size_t t = 0; t < tasks; ++t) {
      ThinSvd& f = set.per_task[t][l];
      for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t i = 0; i < rows_u; ++i) f.u(i, j) = white_u(i, t * k + j);
        for (std::size_t i = 0; i < rows_v; ++i) f.v(i, j) = white_v(i, t * k + j);
      }
    }
  }
  return set;
}

std::size_t intrinsic_rank(const std::vector<double>& s, double energy_fraction) {
  if (energy_fraction <= 0.0 || energy_fraction > 1.0) {
    throw ConfigError("intrinsic_rank: energy fraction must be in (0, 1]");
  }
  double total = 0.0;
  for (double x : s) total += x * x;
  if (total == 0.0) return 0;
  const double target = energy_fraction * total;
  double cum = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    cum += s[i] * s[i];
    if (cum >= target) return i + 1;
  }
  return s.size();
}

void save_spectral_set(const SpectralSet& set, const std::filesystem::path& path,
                       const nlohmann::json& manifest_extra) {
  Checkpoint ckpt;
  for (std::size_t t = 0; t < set.num_tasks(); ++t) {
    for (std::size_t l = 0; l < set.num_layers(); ++l) {
      const ThinSvd& f = set.per_task[t][l];
      const std::string stem = std::to_string(t) + "." + set.layers[l];
      ckpt.backbone.add(stem + ".U", f.u);
      Matrix s_row(1, f.s.size());
      for (std::size_t j = 0; j < f.s.size(); ++j) s_row(0, j) = f.s[j];
      ckpt.backbone.add(stem + ".S", std::move(s_row));
      ckpt.backbone.add(stem + ".V", f.v);
    }
  }
  ckpt.manifest = manifest_extra;
  ckpt.manifest["spectral"] = {{"whitened", set.whitened},
                               {"layers", set.layers},
                               {"num_tasks", set.num_tasks()}};
  save_checkpoint(ckpt, path);
}

SpectralSet load_spectral_set(const std::filesystem::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (!ckpt.manifest.contains("spectral")) {
    throw IoError("spectral cache: manifest block missing in '" + path.string() + "'");
  }
  const auto& meta = ckpt.manifest.at("spectral");
  SpectralSet set;
  set.whitened = meta.at("whitened").get<bool>();
  set.layers = meta.at("layers").get<std::vector<std::string>>();
  const auto tasks = meta.at("num_tasks").get<std::size_t>();
  set.per_task.assign(tasks, std::vector<ThinSvd>(set.layers.size()));
  for (std::size_t t = 0; t < tasks; ++t) {
    for (std::size_t l = 0; l < set.layers.size(); ++l) {
      const std::string stem = std::to_string(t) + "." + set.layers[l];
      ThinSvd f;
      f.u = ckpt.backbone.at(stem + ".U");
      f.v = ckpt.backbone.at(stem + ".V");
      const Matrix& s_row = ckpt.backbone.at(stem + ".S");
      f.s.assign(s_row.data(), s_row.data() + s_row.size());
      set.per_task[t][l] = std::move(f);
    }
  }
  return set;
}

std::shared_ptr<const SpectralSet> SpectralCache::get_or_compute(
    const std::string& key, const std::function<SpectralSet()>& compute) {
  auto it = entries_.find(key);
  if (it != entries_.end()) return it->second;
  auto value = std::make_shared<const SpectralSet>(compute());
  entries_.emplace(key, value);
  return value;
}

}  // namespace adarank
