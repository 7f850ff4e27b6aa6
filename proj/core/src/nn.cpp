#include "adarank/nn.hpp"

#include <cmath>
#include <string>

#include "adarank/error.hpp"

namespace adarank {
namespace {

Matrix activate(const Matrix& z, Activation act) {
  Matrix a = z;
  if (act == Activation::relu) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a.data()[i] < 0.0) a.data()[i] = 0.0;
    }
  } else {
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = std::tanh(a.data()[i]);
  }
  return a;
}

// Derivative expressed through the stored pre-activation; relu' at exactly 0
// is taken as 0.
double activation_slope(double z, Activation act) {
  if (act == Activation::relu) return z > 0.0 ? 1.0 : 0.0;
  const double t = std::tanh(z);
  return 1.0 - t * t;
}

struct ForwardCache {
  std::vector<Matrix> aug;  // aug[0] = [x, 1], aug[l] = [act(z_l), 1]
  std::vector<Matrix> z;    // pre-activations per backbone layer
  Matrix logits;
};

void check_backbone(const ModelSpec& spec, const WeightMap& backbone) {
  const auto names = spec.backbone_layer_names();
  for (std::size_t l = 0; l < names.size(); ++l) {
    const Matrix& w = backbone.at(names[l]);
    const auto [r, c] = spec.backbone_layer_shape(l);
    if (w.rows() != r || w.cols() != c) {
      throw DimensionError("forward: layer '" + names[l] + "' is " +
                           std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                           ", expected " + std::to_string(r) + "x" + std::to_string(c));
    }
  }
}

ForwardCache run_forward(const ModelSpec& spec, const WeightMap& backbone, const Matrix& head,
                         const Matrix& inputs) {
  if (inputs.cols() != spec.input_dim) {
    throw DimensionError("forward: batch has " + std::to_string(inputs.cols()) +
                         " features, expected " + std::to_string(spec.input_dim));
  }
  check_backbone(spec, backbone);
  const auto names = spec.backbone_layer_names();
  if (head.rows() != spec.hidden_dims.back() + 1) {
    throw DimensionError("forward: head rows " + std::to_string(head.rows()) +
                         " incompatible with hidden width " +
                         std::to_string(spec.hidden_dims.back()));
  }

  ForwardCache cache;
  cache.aug.push_back(augment_ones(inputs));
  for (std::size_t l = 0; l < names.size(); ++l) {
    cache.z.push_back(matmul(cache.aug.back(), backbone.at(names[l])));
    cache.aug.push_back(augment_ones(activate(cache.z.back(), spec.activation)));
  }
  cache.logits = matmul(cache.aug.back(), head);
  return cache;
}

// d(batch-mean loss)/d(logits).
Matrix loss_grad_logits(const Matrix& logits, LossKind kind,
                        const std::optional<std::vector<int>>& labels) {
  const std::size_t b = logits.rows(), c = logits.cols();
  const Matrix logp = log_softmax_rows(logits);
  Matrix grad(b, c);
  const double inv_b = 1.0 / static_cast<double>(b);
  if (kind == LossKind::cross_entropy) {
    if (!labels) throw ConfigError("cross-entropy gradient requires labels");
    if (labels->size() != b) throw DimensionError("labels do not match batch rows");
    for (std::size_t i = 0; i < b; ++i) {
      const int y = (*labels)[i];
      if (y < 0 || static_cast<std::size_t>(y) >= c) {
        throw ConfigError("label " + std::to_string(y) + " out of range for " +
                          std::to_string(c) + " classes");
      }
      for (std::size_t j = 0; j < c; ++j) {
        const double p = std::exp(logp(i, j));
        grad(i, j) = (p - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) * inv_b;
      }
    }
  } else {
    // dH/dz = -p (log p + H) per row.
    for (std::size_t i = 0; i < b; ++i) {
      double h = 0.0;
      for (std::size_t j = 0; j < c; ++j) h -= std::exp(logp(i, j)) * logp(i, j);
      for (std::size_t j = 0; j < c; ++j) {
        const double p = std::exp(logp(i, j));
        grad(i, j) = -p * (logp(i, j) + h) * inv_b;
      }
    }
  }
  return grad;
}

// Shared backward pass; head_grad is filled only when requested.
void run_backward(const ModelSpec& spec, const WeightMap& backbone, const Matrix& head,
                  const ForwardCache& cache, const Matrix& dlogits, WeightMap& backbone_grads,
                  Matrix* head_grad) {
  const auto names = spec.backbone_layer_names();
  if (head_grad) *head_grad = matmul(transpose(cache.aug.back()), dlogits);

  // Walk layers top-down; delta holds dL/dz for the current layer.
  Matrix delta;
  {
    const Matrix d_aug = matmul(dlogits, transpose(head));
    const Matrix& z = cache.z.back();
    delta = Matrix(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.rows(); ++i) {
      for (std::size_t j = 0; j < z.cols(); ++j) {
        delta(i, j) = d_aug(i, j) * activation_slope(z(i, j), spec.activation);
      }
    }
  }
  std::vector<Matrix> grads(names.size());
  for (std::size_t l = names.size(); l-- > 0;) {
    grads[l] = matmul(transpose(cache.aug[l]), delta);
    if (l == 0) break;
    const Matrix d_aug = matmul(delta, transpose(backbone.at(names[l])));
    const Matrix& z = cache.z[l - 1];
    Matrix next(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.rows(); ++i) {
      for (std::size_t j = 0; j < z.cols(); ++j) {
        next(i, j) = d_aug(i, j) * activation_slope(z(i, j), spec.activation);
      }
    }
    delta = std::move(next);
  }
  for (std::size_t l = 0; l < names.size(); ++l) {
    backbone_grads.add(names[l], std::move(grads[l]));
  }
}

}  // namespace

std::vector<std::string> ModelSpec::backbone_layer_names() const {
  std::vector<std::string> names;
  names.reserve(hidden_dims.size());
  for (std::size_t l = 0; l < hidden_dims.size(); ++l) {
    names.push_back("layers." + std::to_string(l));
  }
  return names;
}

std::pair<std::size_t, std::size_t> ModelSpec::backbone_layer_shape(std::size_t l) const {
  const std::size_t fan_in = (l == 0) ? input_dim : hidden_dims[l - 1];
  return {fan_in + 1, hidden_dims[l]};
}

std::pair<std::size_t, std::size_t> ModelSpec::head_shape(std::size_t task) const {
  return {hidden_dims.back() + 1, classes_per_task[task]};
}

void ModelSpec::validate() const {
  if (input_dim == 0) throw ConfigError("model: input_dim must be positive");
  if (hidden_dims.empty()) throw ConfigError("model: at least one hidden layer required");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ConfigError("model: hidden width must be positive");
  }
  if (classes_per_task.empty()) throw ConfigError("model: at least one task required");
  for (std::size_t c : classes_per_task) {
    if (c < 2) throw ConfigError("model: every task needs at least two classes");
  }
}

Matrix augment_ones(const Matrix& x) {
  Matrix out(x.rows(), x.cols() + 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j);
    out(i, x.cols()) = 1.0;
  }
  return out;
}

Matrix forward(const ModelSpec& spec, const WeightMap& backbone, const Matrix& head,
               const Matrix& inputs) {
  return run_forward(spec, backbone, head, inputs).logits;
}

Matrix log_softmax_rows(const Matrix& logits) {
  if (logits.rows() == 0 || logits.cols() == 0) {
    throw DimensionError("log_softmax: empty logits");
  }
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double m = logits(i, 0);
    for (std::size_t j = 1; j < logits.cols(); ++j) m = std::max(m, logits(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) sum += std::exp(logits(i, j) - m);
    const double lse = m + std::log(sum);
    for (std::size_t j = 0; j < logits.cols(); ++j) out(i, j) = logits(i, j) - lse;
  }
  return out;
}

std::vector<double> row_entropies(const Matrix& logits) {
  const Matrix logp = log_softmax_rows(logits);
  std::vector<double> h(logits.rows(), 0.0);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      // exp(logp) underflows to exactly 0 for very negative logp, making the
      // product 0 as required at p = 0.
      acc -= std::exp(logp(i, j)) * logp(i, j);
    }
    h[i] = acc;
  }
  return h;
}

double entropy_loss(const Matrix& logits) {
  const auto h = row_entropies(logits);
  double acc = 0.0;
  for (double x : h) acc += x;
  return acc / static_cast<double>(h.size());
}

double cross_entropy_loss(const Matrix& logits, const std::vector<int>& labels) {
  if (labels.size() != logits.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(logits.rows()) + " rows");
  }
  const Matrix logp = log_softmax_rows(logits);
  double acc = 0.0;
  for (std::size_t i = 0; i < logp.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= logp.cols()) {
      throw ConfigError("label " + std::to_string(y) + " out of range for " +
                        std::to_string(logp.cols()) + " classes");
    }
    acc -= logp(i, static_cast<std::size_t>(y));
  }
  return acc / static_cast<double>(logp.rows());
}

GradientBundle backward_weight_grads(const ModelSpec& spec, const WeightMap& backbone,
                                     const Matrix& head, const Batch& batch, LossKind kind) {
  const ForwardCache cache = run_forward(spec, backbone, head, batch.inputs);
  GradientBundle out;
  out.loss_value = (kind == LossKind::entropy)
                       ? entropy_loss(cache.logits)
                       : cross_entropy_loss(cache.logits, batch.labels
                                                              ? *batch.labels
                                                              : std::vector<int>{});
  const Matrix dlogits = loss_grad_logits(cache.logits, kind, batch.labels);
  run_backward(spec, backbone, head, cache, dlogits, out.per_layer, nullptr);
  return out;
}

TrainGradients backward_train(const ModelSpec& spec, const WeightMap& backbone,
                              const Matrix& head, const Batch& batch) {
  if (!batch.labels) throw ConfigError("training batch requires labels");
  const ForwardCache cache = run_forward(spec, backbone, head, batch.inputs);
  TrainGradients out;
  out.loss = cross_entropy_loss(cache.logits, *batch.labels);
  const Matrix dlogits = loss_grad_logits(cache.logits, LossKind::cross_entropy, batch.labels);
  run_backward(spec, backbone, head, cache, dlogits, out.backbone, &out.head);
  return out;
}

}  // namespace adarank
