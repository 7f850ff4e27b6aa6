#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "adarank/checkpoint.hpp"
#include "adarank/svd.hpp"

namespace adarank {

enum class BaseKind { pretrained, mean_of_finetuned };

// Per-task weight deltas against a shared base: tau_i = theta_i - base,
// where the base is either the pretrained backbone or the mean of the
// fine-tuned backbones (in which case the deltas sum to zero).
struct TaskVectorSet {
  WeightMap base;
  std::vector<WeightMap> per_task;
  BaseKind base_kind = BaseKind::pretrained;

  std::size_t num_tasks() const { return per_task.size(); }
};

// `pretrained` is required for BaseKind::pretrained and ignored otherwise.
// All backbones must share layer names, order and shapes.
TaskVectorSet build_task_vectors(const std::vector<WeightMap>& finetuned, BaseKind kind,
                                 const WeightMap* pretrained);

// Thin SVD of every (task, layer) delta. With whiten = true the left and
// right factors of all tasks are concatenated per layer, replaced by the
// nearest orthonormal frame (singular values of the concatenation forced to
// one), and split back per task; the singular values themselves are kept
// unchanged. When tasks * k exceeds the layer dimension the frame cannot be
// exactly orthonormal; its singular values are still capped at one.
struct SpectralSet {
  std::vector<std::string> layers;
  std::vector<std::vector<ThinSvd>> per_task;  // [task][layer]
  bool whitened = false;

  std::size_t num_tasks() const { return per_task.size(); }
  std::size_t num_layers() const { return layers.size(); }
  const ThinSvd& at(std::size_t task, std::size_t layer) const {
    return per_task[task][layer];
  }
};

SpectralSet decompose(const TaskVectorSet& vectors, bool whiten, int workers = 1);

// Smallest component count whose squared singular values reach the requested
// fraction of the total spectral energy; 0 for an all-zero spectrum.
std::size_t intrinsic_rank(const std::vector<double>& s, double energy_fraction);

// On-disk cache in the checkpoint container format, one layer triple per
// (task, layer) named "<task>.<layer>.U" / ".S" / ".V".
void save_spectral_set(const SpectralSet& set, const std::filesystem::path& path,
                       const nlohmann::json& manifest_extra = nlohmann::json::object());
SpectralSet load_spectral_set(const std::filesystem::path& path);

// Session cache keyed by (checkpoint digests, base kind, whiten flag).
class SpectralCache {
 public:
  std::shared_ptr<const SpectralSet> get_or_compute(
      const std::string& key, const std::function<SpectralSet()>& compute);

 private:
  std::map<std::string, std::shared_ptr<const SpectralSet>> entries_;
};

}  // namespace adarank
