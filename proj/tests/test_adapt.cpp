#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "adarank/adapt.hpp"
#include "adarank/error.hpp"
#include "adarank/rng.hpp"

using namespace adarank;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Two tasks, two hidden layers, smooth activation so finite differences see
// a C-infinity loss surface.
struct Toy {
  ModelSpec spec;
  WeightMap pretrained;
  TaskVectorSet vectors;
  SpectralSet set;
  std::vector<Matrix> heads;
  std::vector<Matrix> inputs;

  explicit Toy(std::uint64_t seed) {
    spec.input_dim = 5;
    spec.hidden_dims = {6, 5};
    spec.classes_per_task = {3, 4};
    spec.activation = Activation::tanh;

    pretrained = init_model(spec, seed).backbone;
    std::vector<WeightMap> finetuned;
    for (std::size_t t = 0; t < 2; ++t) {
      WeightMap w;
      for (std::size_t l = 0; l < pretrained.size(); ++l) {
        const Matrix& base = pretrained.matrix(l);
        w.add(pretrained.name(l),
              base + 0.3 * random_matrix(base.rows(), base.cols(), Rng::mix(seed, 10 * t + l)));
      }
      finetuned.push_back(std::move(w));
    }
    vectors = build_task_vectors(finetuned, BaseKind::pretrained, &pretrained);
    set = decompose(vectors, false);
    for (std::size_t t = 0; t < 2; ++t) {
      heads.push_back(init_head(spec, t, seed + 1));
      inputs.push_back(random_matrix(8, spec.input_dim, Rng::mix(seed, 100 + t)));
    }
  }

  // Merged backbone with continuous mask values: the surface the
  // straight-through estimator differentiates.
  WeightMap merged_relaxed(const std::vector<std::vector<std::vector<double>>>& mask_values,
                           const LambdaMap& lambda) const {
    WeightMap out;
    for (std::size_t l = 0; l < set.num_layers(); ++l) {
      Matrix acc = pretrained.at(set.layers[l]);
      for (std::size_t t = 0; t < set.num_tasks(); ++t) {
        const ThinSvd& f = set.at(t, l);
        std::vector<double> scale(f.num_components());
        for (std::size_t r = 0; r < scale.size(); ++r) {
          scale[r] = mask_values[t][l][r] * f.s[r];
        }
        acc += lambda.at(t, l) * scaled_outer_sum(f, scale);
      }
      out.add(set.layers[l], std::move(acc));
    }
    return out;
  }

  double entropy_of(const WeightMap& backbone) const {
    double total = 0.0;
    for (std::size_t t = 0; t < 2; ++t) {
      total += entropy_loss(forward(spec, backbone, heads[t], inputs[t]));
    }
    return total;
  }

  // Total entropy weight-gradient, summed over both task losses.
  WeightMap total_grad(const WeightMap& backbone) const {
    WeightMap acc;
    for (std::size_t t = 0; t < 2; ++t) {
      Batch batch;
      batch.inputs = inputs[t];
      batch.task_id = static_cast<int>(t);
      const GradientBundle g = backward_weight_grads(spec, backbone, heads[t], batch,
                                                     LossKind::entropy);
      if (acc.empty()) {
        for (std::size_t l = 0; l < g.per_layer.size(); ++l) {
          acc.add(g.per_layer.name(l), g.per_layer.matrix(l));
        }
      } else {
        for (std::size_t l = 0; l < g.per_layer.size(); ++l) {
          acc.matrix(l) += g.per_layer.matrix(l);
        }
      }
    }
    return acc;
  }
};

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const char* name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("binarize activates components at logit zero and above") {
  const std::vector<double> logits = {-1e-300, 0.0, 1e-300, -0.5, 3.0};
  const auto bits = binarize(logits, 10.0);
  CHECK_EQ(bits, std::vector<std::uint8_t>{0, 1, 1, 0, 1});
  CHECK_THROWS_AS(binarize(logits, 0.0), ConfigError);
}

TEST_CASE("straight-through gradient matches the sigmoid derivative") {
  // sigmoid'(0) = 1/4, divided by the temperature.
  const auto at_zero = ste_backward({1.0}, {0.0}, 10.0);
  CHECK_EQ(at_zero[0], 0.025);

  const double logit = 7.0, temp = 10.0, upstream = -1.3;
  const double s = 1.0 / (1.0 + std::exp(-logit / temp));
  const auto got = ste_backward({upstream}, {logit}, temp);
  CHECK_EQ(got[0], doctest::Approx(upstream * s * (1.0 - s) / temp).epsilon(1e-15));

  const auto doubled = ste_backward({2.0}, {0.0}, 10.0);
  CHECK_EQ(doubled[0], 0.05);
  CHECK_THROWS_AS(ste_backward({1.0, 2.0}, {0.0}, 10.0), DimensionError);
}

TEST_CASE("component couplings equal the projected gradient") {
  const Matrix delta = random_matrix(6, 4, 3);
  const ThinSvd f = svd_thin(delta);
  const Matrix grad = random_matrix(6, 4, 4);
  const auto got = component_couplings(grad, f);
  REQUIRE_EQ(got.size(), f.num_components());
  for (std::size_t r = 0; r < got.size(); ++r) {
    double want = 0.0;
    for (std::size_t i = 0; i < grad.rows(); ++i) {
      for (std::size_t j = 0; j < grad.cols(); ++j) {
        want += f.u(i, r) * grad(i, j) * f.v(j, r);
      }
    }
    want *= f.s[r];
    CHECK_EQ(got[r], doctest::Approx(want).epsilon(1e-10));
  }

  const auto mask_grad = mask_grad_from_weight_grad(grad, f, 0.7);
  for (std::size_t r = 0; r < got.size(); ++r) {
    CHECK_EQ(mask_grad[r], doctest::Approx(0.7 * got[r]).epsilon(1e-14));
  }

  std::vector<std::uint8_t> bits(got.size(), 0);
  bits[0] = 1;
  bits[2] = 1;
  const double lg = lambda_grad_from_weight_grad(grad, f, bits);
  CHECK_EQ(lg, doctest::Approx(got[0] + got[2]).epsilon(1e-14));
}

TEST_CASE("mask initialization policies set the advertised support") {
  const Toy toy(11);
  const LambdaMap lambda = LambdaMap::uniform(2, 2, 0.4);
  const double hi = kInitLogitMargin * 10.0;

  const MaskState ones = init_mask(InitPolicy::all_ones, toy.set, 10.0, lambda);
  for (const auto& task : ones.logits) {
    for (const auto& layer : task) {
      for (double x : layer) CHECK_EQ(x, hi);
    }
  }
  CHECK_EQ(ones.temperature, 10.0);
  CHECK_EQ(ones.lambda.at(1, 1), 0.4);

  // Layer ranks here: layers.0 is 6x6 -> k = 6, layers.1 is 7x5 -> k = 5.
  const MaskState frac = init_mask(InitPolicy::top_fraction, toy.set, 10.0, lambda, 0.5);
  const auto bits = binarize_all(frac);
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK_EQ(std::count(bits[t][0].begin(), bits[t][0].end(), 1), 3);  // floor(0.5 * 6)
    CHECK_EQ(std::count(bits[t][1].begin(), bits[t][1].end(), 1), 2);  // floor(0.5 * 5)
    CHECK_EQ(bits[t][0][0], 1);
    CHECK_EQ(bits[t][0][3], 0);
    CHECK_EQ(frac.logits[t][0][5], -hi);
  }

  const MaskState share = init_mask(InitPolicy::per_task_share, toy.set, 10.0, lambda);
  const auto share_bits = binarize_all(share);
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK_EQ(std::count(share_bits[t][0].begin(), share_bits[t][0].end(), 1), 3);  // 6 / 2
    CHECK_EQ(std::count(share_bits[t][1].begin(), share_bits[t][1].end(), 1), 2);  // 5 / 2
  }

  // The margin is chosen pre-temperature: the initial relaxed mask value is
  // temperature independent.
  const MaskState cool = init_mask(InitPolicy::all_ones, toy.set, 2.0, lambda);
  CHECK_EQ(cool.logits[0][0][0] / 2.0, ones.logits[0][0][0] / 10.0);
}

TEST_CASE("mask gradients agree with finite differences of the relaxed loss") {
  const Toy toy(21);
  const LambdaMap lambda = LambdaMap::uniform(2, 2, 0.4);

  // General-position fractional mask values.
  std::vector<std::vector<std::vector<double>>> values(2);
  for (std::size_t t = 0; t < 2; ++t) {
    values[t].resize(2);
    for (std::size_t l = 0; l < 2; ++l) {
      const std::size_t k = toy.set.at(t, l).num_components();
      values[t][l].resize(k);
      for (std::size_t r = 0; r < k; ++r) {
        values[t][l][r] = 0.2 + 0.3 * static_cast<double>((t + l + r) % 3);
      }
    }
  }

  const WeightMap merged = toy.merged_relaxed(values, lambda);
  const WeightMap grad = toy.total_grad(merged);

  const double eps = 1e-5;
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t l = 0; l < 2; ++l) {
      const auto analytic =
          mask_grad_from_weight_grad(grad.at(toy.set.layers[l]), toy.set.at(t, l),
                                     lambda.at(t, l));
      for (std::size_t r = 0; r < values[t][l].size(); r += 2) {
        auto plus = values, minus = values;
        plus[t][l][r] += eps;
        minus[t][l][r] -= eps;
        const double fd = (toy.entropy_of(toy.merged_relaxed(plus, lambda)) -
                           toy.entropy_of(toy.merged_relaxed(minus, lambda))) /
                          (2.0 * eps);
        CHECK_LE(std::abs(analytic[r] - fd), 1e-6 * (1.0 + std::abs(fd)));
      }
    }
  }
}

TEST_CASE("lambda gradients agree with finite differences of the merged loss") {
  const Toy toy(31);
  MaskState state = init_mask(InitPolicy::top_fraction, toy.set, 10.0,
                              LambdaMap::uniform(2, 2, 0.4), 0.6);
  const MaskBits bits = binarize_all(state);
  const WeightMap merged = merge_masked(toy.pretrained, toy.set, bits, state.lambda);
  const WeightMap grad = toy.total_grad(merged);

  const double eps = 1e-5;
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t l = 0; l < 2; ++l) {
      const double analytic =
          lambda_grad_from_weight_grad(grad.at(toy.set.layers[l]), toy.set.at(t, l), bits[t][l]);
      LambdaMap plus = state.lambda, minus = state.lambda;
      plus.at(t, l) += eps;
      minus.at(t, l) -= eps;
      const double fd = (toy.entropy_of(merge_masked(toy.pretrained, toy.set, bits, plus)) -
                         toy.entropy_of(merge_masked(toy.pretrained, toy.set, bits, minus))) /
                        (2.0 * eps);
      CHECK_LE(std::abs(analytic - fd), 1e-6 * (1.0 + std::abs(fd)));
    }
  }
}

TEST_CASE("adam reaches the bias-corrected unit step") {
  AdamState adam;
  adam.resize(1);
  std::vector<double> x = {0.0};
  adam.update(x, {1.0});
  // First step with a constant gradient: both bias corrections cancel.
  const double want = -(1e-3 / (1.0 + 1e-8));
  CHECK_EQ(x[0], doctest::Approx(want).epsilon(1e-12));
  CHECK_EQ(adam.step, 1);
  adam.update(x, {1.0});
  CHECK_EQ(x[0], doctest::Approx(2.0 * want).epsilon(1e-9));
  CHECK_THROWS_AS(adam.update(x, {1.0, 2.0}), DimensionError);
}

TEST_CASE("streams keep a leading slice of the test split") {
  Dataset d;
  d.inputs = random_matrix(10, 3, 41);
  d.labels.assign(10, 0);
  CHECK_EQ(make_stream(d, 1.0).inputs.rows(), 10);
  CHECK_EQ(make_stream(d, 0.25).inputs.rows(), 2);
  const UnlabeledStream one = make_stream(d, 0.01);  // floor rounds to 0, clamped to 1
  REQUIRE_EQ(one.inputs.rows(), 1);
  for (std::size_t j = 0; j < 3; ++j) CHECK_EQ(one.inputs(0, j), d.inputs(0, j));
  CHECK_THROWS_AS(make_stream(d, 0.0), ConfigError);
  CHECK_THROWS_AS(make_stream(d, 1.5), ConfigError);
}

TEST_CASE("adaptation rejects zero steps and runs deterministically") {
  const Toy toy(51);
  MaskState state = init_mask(InitPolicy::all_ones, toy.set, 10.0,
                              LambdaMap::uniform(2, 2, 0.3));
  std::vector<UnlabeledStream> streams = {UnlabeledStream{toy.inputs[0]},
                                          UnlabeledStream{toy.inputs[1]}};
  AdaptSettings settings;
  settings.steps = 0;
  CHECK_THROWS_AS(adapt(toy.spec, toy.pretrained, toy.set, toy.heads, streams, state,
                        AdamState{}, settings),
                  ConfigError);

  settings.steps = 5;
  settings.batch_size = 4;
  settings.seed = 9;
  const AdaptResult a = adapt(toy.spec, toy.pretrained, toy.set, toy.heads, streams, state,
                              AdamState{}, settings);
  const AdaptResult b = adapt(toy.spec, toy.pretrained, toy.set, toy.heads, streams, state,
                              AdamState{}, settings);
  REQUIRE_EQ(a.trace.records.size(), 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK_EQ(a.trace.records[i].step, i);
    CHECK_EQ(a.trace.records[i].total_loss, b.trace.records[i].total_loss);
    CHECK(std::isfinite(a.trace.records[i].total_loss));
    REQUIRE_EQ(a.trace.records[i].per_task_loss.size(), 2);
    REQUIRE_EQ(a.trace.records[i].active_bits.size(), 2);
  }
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t l = 0; l < 2; ++l) {
      CHECK_EQ(a.state.logits[t][l], b.state.logits[t][l]);
      CHECK_EQ(a.state.lambda.at(t, l), b.state.lambda.at(t, l));
    }
  }
}

TEST_CASE("the sum reduction totals the per-task losses") {
  const Toy toy(61);
  MaskState state = init_mask(InitPolicy::all_ones, toy.set, 10.0,
                              LambdaMap::uniform(2, 2, 0.3));
  std::vector<UnlabeledStream> streams = {UnlabeledStream{toy.inputs[0]},
                                          UnlabeledStream{toy.inputs[1]}};
  AdaptSettings settings;
  settings.steps = 2;
  settings.batch_size = 8;

  const AdaptResult sum_run = adapt(toy.spec, toy.pretrained, toy.set, toy.heads, streams,
                                    state, AdamState{}, settings);
  for (const AdaptRecord& rec : sum_run.trace.records) {
    double total = 0.0;
    for (double x : rec.per_task_loss) total += x;
    CHECK_EQ(rec.total_loss, doctest::Approx(total).epsilon(1e-12));
  }

  settings.reduction = TaskReduction::mean;
  const AdaptResult mean_run = adapt(toy.spec, toy.pretrained, toy.set, toy.heads, streams,
                                     state, AdamState{}, settings);
  const AdaptRecord& rec = mean_run.trace.records.front();
  double total = 0.0;
  for (double x : rec.per_task_loss) total += x;
  CHECK_EQ(rec.total_loss, doctest::Approx(0.5 * total).epsilon(1e-12));
}

TEST_CASE("frozen runs keep the state and the loss constant") {
  const Toy toy(71);
  MaskState state = init_mask(InitPolicy::top_fraction, toy.set, 10.0,
                              LambdaMap::uniform(2, 2, 0.3), 0.5);
  state.learn_mask = false;
  state.learn_lambda = false;
  // Single-row streams make every batch identical, so a frozen model must
  // produce the same loss at every step.
  std::vector<UnlabeledStream> streams;
  for (std::size_t t = 0; t < 2; ++t) {
    Matrix row(1, toy.spec.input_dim);
    for (std::size_t j = 0; j < row.cols(); ++j) row(0, j) = toy.inputs[t](0, j);
    streams.push_back(UnlabeledStream{std::move(row)});
  }
  AdaptSettings settings;
  settings.steps = 4;
  settings.batch_size = 1;
  const AdaptResult run = adapt(toy.spec, toy.pretrained, toy.set, toy.heads, streams, state,
                                AdamState{}, settings);
  REQUIRE_EQ(run.trace.records.size(), 4);
  for (const AdaptRecord& rec : run.trace.records) {
    CHECK_EQ(rec.total_loss, run.trace.records.front().total_loss);
  }
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t l = 0; l < 2; ++l) {
      CHECK_EQ(run.state.logits[t][l], state.logits[t][l]);
      CHECK_EQ(run.state.lambda.at(t, l), 0.3);
    }
  }
}

TEST_CASE("range restriction clamps trailing components for the whole run") {
  const Toy toy(81);
  MaskState state = init_mask(InitPolicy::all_ones, toy.set, 10.0,
                              LambdaMap::uniform(2, 2, 0.3));
  state.range_restriction = 0.5;
  std::vector<UnlabeledStream> streams = {UnlabeledStream{toy.inputs[0]},
                                          UnlabeledStream{toy.inputs[1]}};
  AdaptSettings settings;
  settings.steps = 3;
  settings.batch_size = 4;
  const AdaptResult run = adapt(toy.spec, toy.pretrained, toy.set, toy.heads, streams, state,
                                AdamState{}, settings);
  const double lo = -kInitLogitMargin * 10.0;
  // Layer ranks 6 and 5; the 0.5 cap allows 3 and 2 leading components.
  const std::vector<std::size_t> allowed = {3, 2};
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t l = 0; l < 2; ++l) {
      for (std::size_t r = allowed[l]; r < run.state.logits[t][l].size(); ++r) {
        CHECK_EQ(run.state.logits[t][l][r], lo);
      }
      std::size_t active = 0;
      for (double x : run.state.logits[t][l]) {
        if (x >= 0.0) ++active;
      }
      CHECK_LE(active, allowed[l]);
    }
  }

  MaskState bad = state;
  bad.range_restriction = 1.5;
  CHECK_THROWS_AS(adapt(toy.spec, toy.pretrained, toy.set, toy.heads, streams, bad,
                        AdamState{}, settings),
                  ConfigError);
}

TEST_CASE("divergence surfaces as a typed error carrying the trace") {
  const Toy toy(91);
  // Unbounded activation plus coefficients large enough that the two-layer
  // product overflows to a non-finite loss.
  ModelSpec relu_spec = toy.spec;
  relu_spec.activation = Activation::relu;
  MaskState state = init_mask(InitPolicy::all_ones, toy.set, 10.0,
                              LambdaMap::uniform(2, 2, 1e200));
  std::vector<UnlabeledStream> streams = {UnlabeledStream{toy.inputs[0]},
                                          UnlabeledStream{toy.inputs[1]}};
  AdaptSettings settings;
  settings.steps = 3;
  settings.batch_size = 4;
  try {
    adapt(relu_spec, toy.pretrained, toy.set, toy.heads, streams, state, AdamState{}, settings);
    FAIL("expected divergence");
  } catch (const AdaptDivergence& e) {
    CHECK_EQ(e.step(), 0);
    CHECK_EQ(e.trace().records.size(), 1);
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
}

TEST_CASE("the engine records the initial loss when asked for zero steps") {
  const Toy toy(101);
  MaskState state = init_mask(InitPolicy::all_ones, toy.set, 10.0,
                              LambdaMap::uniform(2, 2, 0.3));
  const std::vector<const std::vector<int>*> no_labels = {nullptr, nullptr};
  AdaptSettings settings;
  settings.steps = 0;
  settings.batch_size = 8;
  const AdaptResult run = adapt_engine(toy.spec, toy.pretrained, toy.set, toy.heads, toy.inputs,
                                       no_labels, LossKind::entropy, state, AdamState{},
                                       settings);
  REQUIRE_EQ(run.trace.records.size(), 1);
  CHECK_EQ(run.trace.records[0].step, 0);
  CHECK(std::isfinite(run.trace.records[0].total_loss));
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t l = 0; l < 2; ++l) CHECK_EQ(run.state.logits[t][l], state.logits[t][l]);
  }

  std::vector<int> labels0(8, 0), labels1(8, 1);
  const std::vector<const std::vector<int>*> labels = {&labels0, &labels1};
  const AdaptResult ce = adapt_engine(toy.spec, toy.pretrained, toy.set, toy.heads, toy.inputs,
                                      labels, LossKind::cross_entropy, state, AdamState{},
                                      settings);
  CHECK(std::isfinite(ce.trace.records[0].total_loss));
  CHECK_THROWS_AS(adapt_engine(toy.spec, toy.pretrained, toy.set, toy.heads, toy.inputs,
                               no_labels, LossKind::cross_entropy, state, AdamState{}, settings),
                  ConfigError);
}

TEST_CASE("mask state files round-trip") {
  const TempDir dir("adarank_test_mask_io");
  const Toy toy(111);
  MaskState state = init_mask(InitPolicy::top_fraction, toy.set, 10.0,
                              LambdaMap::uniform(2, 2, 0.3), 0.5);
  state.lambda.at(1, 0) = 0.9;
  state.logits[0][1][2] = 1.75;
  state.learn_lambda = false;
  state.range_restriction = 0.25;

  const auto path = dir.path / "mask.adrk";
  save_mask_state(state, toy.set.layers, path);
  std::vector<std::string> layers;
  const MaskState back = load_mask_state(path, &layers);
  CHECK_EQ(layers, toy.set.layers);
  CHECK_EQ(back.temperature, state.temperature);
  CHECK_EQ(back.learn_mask, state.learn_mask);
  CHECK_EQ(back.learn_lambda, state.learn_lambda);
  REQUIRE(back.range_restriction.has_value());
  CHECK_EQ(*back.range_restriction, 0.25);
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t l = 0; l < 2; ++l) {
      CHECK_EQ(back.logits[t][l], state.logits[t][l]);
      CHECK_EQ(back.lambda.at(t, l), state.lambda.at(t, l));
    }
  }

  state.range_restriction.reset();
  save_mask_state(state, toy.set.layers, path);
  const MaskState plain = load_mask_state(path);
  CHECK_FALSE(plain.range_restriction.has_value());
}

TEST_CASE("trace files carry one row per step") {
  const TempDir dir("adarank_test_trace_io");
  AdaptTrace trace;
  for (std::size_t i = 0; i < 3; ++i) {
    AdaptRecord rec;
    rec.step = i;
    rec.total_loss = 1.5 - 0.1 * static_cast<double>(i);
    rec.per_task_loss = {1.0, 0.5};
    rec.active_bits = {{3, 2}, {1, 4}};
    trace.records.push_back(rec);
  }
  const auto path = dir.path / "trace.csv";
  write_trace_csv(trace, 2, {"layers.0", "layers.1"}, path);

  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE_EQ(lines.size(), 4);
  CHECK(lines[0].rfind("step,total_entropy,entropy_task_0,entropy_task_1", 0) == 0);
  CHECK(lines[0].find("active_bits_task_0_layer_0") != std::string::npos);
  CHECK(lines[1].rfind("0,", 0) == 0);
  CHECK(lines[3].find(",3,2,1,4") != std::string::npos);
}
