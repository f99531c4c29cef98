// Copyright 2026 The vrexmix Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "vrexmix/gradcheck_suite.hpp"

#include "vrexmix/data.hpp"
#include "vrexmix/gradcheck.hpp"
#include "vrexmix/model.hpp"
#include "vrexmix/objectives.hpp"
#include "vrexmix/seed.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

namespace vrexmix {

namespace {

using T = Traced<double>;
using Rng = std::mt19937_64;

Tensor normal(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev = 1.0) {
  std::normal_distribution<double> d(0.0, stddev);
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = d(rng);
  return t;
}

/// Rows drawn from a Dirichlet(1,...,1): valid soft targets.
Tensor soft_targets(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::exponential_distribution<double> d(1.0);
  Tensor t(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) t(r, c) = d(rng);
    t.row(r) /= t.row(r).sum();
  }
  return t;
}

/// Keeps entries at least `gap` away from zero so a ReLU kink is never
/// straddled by the finite-difference stencil.
Tensor away_from_zero(Tensor t, double gap) {
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    double& v = t.data()[i];
    if (std::abs(v) < gap) v = v < 0 ? -gap : gap;
  }
  return t;
}

/// Smallest |pre-activation| over the hidden layers of `params` on `batch`.
double hidden_margin(const ModelParams& params, const Tensor& batch) {
  double margin = std::numeric_limits<double>::infinity();
  Tensor h = batch;
  for (std::size_t k = 0; k + 1 < params.layers.size(); ++k) {
    Tensor z = h * params.layers[k].weight;
    z.rowwise() += params.layers[k].bias.row(0);
    margin = std::min(margin, z.cwiseAbs().minCoeff());
    h = z.cwiseMax(0.0);
  }
  return margin;
}

/// Redraws until no hidden unit sits within `gap` of the ReLU kink, so the
/// finite-difference stencil stays on one linear piece.
template <typename Draw>
auto draw_away_from_kinks(Rng& rng, double gap, Draw draw) {
  for (;;) {
    auto sample = draw(rng);
    if (hidden_margin(sample.params, sample.batch) >= gap) return sample;
  }
}

T faulty_relu(const T& a) {
  Tape<double>& tape = *a.tape();
  return tape.record(a.value().cwiseMax(0.0), {a},
                     [](const Tensor& g, std::span<Tensor* const> pg) {
                       if (pg[0]) *pg[0] += g;
                     });
}

struct Case {
  std::string name;
  /// Checks one random draw, returning its max relative error.
  std::function<double(Rng&, double h)> run;
};

/// A case whose draw yields a double-precision function and point.
template <typename Draw>
Case case_of(std::string name, Draw draw) {
  return {std::move(name), [draw](Rng& rng, double h) {
            const auto [f, point] = draw(rng);
            return grad_check<double>(f, point, h).max_relative_error;
          }};
}

std::vector<Case> build_cases(const GradCheckOptions& options) {
  std::vector<Case> cases;

  cases.push_back(case_of("matmul_lhs", [](Rng& rng) {
                     Tensor b = normal(rng, 4, 3);
                     Tensor t = soft_targets(rng, 5, 3);
                     TracedFunction<double> f = [b, t](Tape<double>& tape, const T& x) {
                       return softmax_cross_entropy(matmul(x, tape.constant(b)), t);
                     };
                     return std::pair{f, normal(rng, 5, 4)};
                   }));
  cases.push_back(case_of("matmul_rhs", [](Rng& rng) {
                     Tensor a = normal(rng, 5, 4);
                     Tensor t = soft_targets(rng, 5, 3);
                     TracedFunction<double> f = [a, t](Tape<double>& tape, const T& x) {
                       return softmax_cross_entropy(matmul(tape.constant(a), x), t);
                     };
                     return std::pair{f, normal(rng, 4, 3)};
                   }));
  cases.push_back(case_of("add", [](Rng& rng) {
                     Tensor b = normal(rng, 4, 3);
                     Tensor t = soft_targets(rng, 4, 3);
                     TracedFunction<double> f = [b, t](Tape<double>& tape, const T& x) {
                       return softmax_cross_entropy(add(x, add(x, tape.constant(b))), t);
                     };
                     return std::pair{f, normal(rng, 4, 3)};
                   }));
  cases.push_back(case_of("add_row_broadcast", [](Rng& rng) {
                     Tensor a = normal(rng, 6, 3);
                     Tensor t = soft_targets(rng, 6, 3);
                     TracedFunction<double> f = [a, t](Tape<double>& tape, const T& x) {
                       return softmax_cross_entropy(add_row_broadcast(tape.constant(a), x), t);
                     };
                     return std::pair{f, normal(rng, 1, 3)};
                   }));
  cases.push_back(case_of("scale", [](Rng& rng) {
                     Tensor t = soft_targets(rng, 4, 2);
                     TracedFunction<double> f = [t](Tape<double>&, const T& x) {
                       return softmax_cross_entropy(scale(x, -1.7), t);
                     };
                     return std::pair{f, normal(rng, 4, 2)};
                   }));
  const bool fault = options.inject_relu_fault;
  cases.push_back(case_of("relu", [fault](Rng& rng) {
                     Tensor w = normal(rng, 4, 3);
                     Tensor t = soft_targets(rng, 5, 3);
                     TracedFunction<double> f = [w, t, fault](Tape<double>& tape, const T& x) {
                       const T h = fault ? faulty_relu(x) : relu(x);
                       return softmax_cross_entropy(matmul(h, tape.constant(w)), t);
                     };
                     return std::pair{f, away_from_zero(normal(rng, 5, 4), 1e-3)};
                   }));
  cases.push_back(case_of("softmax_cross_entropy", [](Rng& rng) {
                     Tensor t = soft_targets(rng, 8, 3);
                     TracedFunction<double> f = [t](Tape<double>&, const T& x) {
                       return softmax_cross_entropy(x, t);
                     };
                     return std::pair{f, normal(rng, 8, 3, 2.0)};
                   }));
  cases.push_back(case_of("reduce_mean", [](Rng& rng) {
                     TracedFunction<double> f = [](Tape<double>&, const T& x) { return reduce_mean(x); };
                     return std::pair{f, normal(rng, 3, 4)};
                   }));
  cases.push_back(case_of("variance", [](Rng& rng) {
                     TracedFunction<double> f = [](Tape<double>&, const T& x) { return variance(x); };
                     return std::pair{f, normal(rng, 6, 1)};
                   }));
  cases.push_back(case_of("variance_sample", [](Rng& rng) {
                     TracedFunction<double> f = [](Tape<double>&, const T& x) {
                       return variance(x, VarianceMode::sample);
                     };
                     return std::pair{f, normal(rng, 5, 1)};
                   }));
  cases.push_back(case_of("stack", [](Rng& rng) {
                     Tensor t = soft_targets(rng, 3, 2);
                     TracedFunction<double> f = [t](Tape<double>&, const T& x) {
                       const std::vector<T> parts = {reduce_mean(x), variance(x),
                                                     softmax_cross_entropy(x, t)};
                       return variance(stack(parts));
                     };
                     return std::pair{f, normal(rng, 3, 2)};
                   }));
  cases.push_back(case_of("vrex_objective", [](Rng& rng) {
                     std::uniform_real_distribution<double> risk(0.1, 2.0);
                     std::uniform_real_distribution<double> lam(0.0, 10.0);
                     const double lambda = lam(rng);
                     TracedFunction<double> f = [lambda](Tape<double>&, const T& x) {
                       return vrex_objective(RiskVector{x}, lambda);
                     };
                     Tensor point(5, 1);
                     for (Eigen::Index i = 0; i < 5; ++i) point(i, 0) = risk(rng);
                     return std::pair{f, point};
                   }));

  // Two-hidden-layer MLP: one case per parameter tensor, the others held
  // constant. These run in extended precision: some weight gradients are
  // near 1e-8, where double rounding in f(x +- h) swamps the comparison.
  const ModelConfig mlp{6, {16, 16}, 2, InitScheme::he, 0};
  for (std::size_t layer = 0; layer < 3; ++layer)
    for (const bool is_bias : {false, true}) {
      std::string name = "mlp_layer" + std::to_string(layer) + (is_bias ? "_bias" : "_weight");
      cases.push_back({std::move(name), [mlp, layer, is_bias](Rng& rng, double h) {
                         struct Sample {
                           ModelParams params;
                           Tensor batch;
                         };
                         const auto [params, batch] = draw_away_from_kinks(rng, 1e-3, [&](Rng& r) {
                           ModelConfig cfg = mlp;
                           cfg.seed = r();
                           Sample s{init_params(cfg), normal(r, 8, 6)};
                           for (auto& l : s.params.layers) l.bias = normal(r, 1, l.bias.cols(), 0.1);
                           return s;
                         });
                         using L = long double;
                         const Matrix<L> targets = soft_targets(rng, 8, 2).cast<L>();
                         const Matrix<L> inputs = batch.cast<L>();
                         const Layer& probe = params.layers[layer];
                         const Matrix<L> point = (is_bias ? probe.bias : probe.weight).cast<L>();
                         TracedFunction<L> f = [&](Tape<L>& tape, const Traced<L>& x) {
                           BasicBoundParams<L> bound;
                           for (std::size_t k = 0; k < params.layers.size(); ++k) {
                             const Layer& l = params.layers[k];
                             bound.weights.push_back(k == layer && !is_bias
                                                         ? x
                                                         : tape.constant(l.weight.cast<L>()));
                             bound.biases.push_back(k == layer && is_bias
                                                        ? x
                                                        : tape.constant(l.bias.cast<L>()));
                           }
                           return softmax_cross_entropy(forward(tape, bound, inputs), targets);
                         };
                         return grad_check<L>(f, point, static_cast<L>(h)).max_relative_error;
                       }});
    }

  cases.push_back(case_of("mlp_vrex_objective", [mlp](Rng& rng) {
                     struct Sample {
                       ModelParams params;
                       Tensor batch;  // the three environment batches stacked
                     };
                     const auto [params, batch] = draw_away_from_kinks(rng, 1e-3, [&](Rng& r) {
                       ModelConfig cfg = mlp;
                       cfg.seed = r();
                       return Sample{init_params(cfg), normal(r, 18, 6)};
                     });
                     BatchGroup group;
                     std::bernoulli_distribution coin(0.5);
                     for (int e = 0; e < 3; ++e) {
                       Batch b;
                       b.domain_id = e;
                       b.features = batch.middleRows(6 * e, 6);
                       for (int r = 0; r < 6; ++r) b.labels.push_back(coin(rng) ? 1 : 0);
                       group.push_back(std::move(b));
                     }
                     TracedFunction<double> f = [params, group](Tape<double>& tape, const T& x) {
                       BoundParams bound;
                       for (std::size_t k = 0; k < params.layers.size(); ++k) {
                         bound.weights.push_back(k == 0 ? x : tape.constant(params.layers[k].weight));
                         bound.biases.push_back(tape.constant(params.layers[k].bias));
                       }
                       return vrex_objective(per_environment_risks(tape, bound, group, 2, 3), 5.0);
                     };
                     return std::pair{f, params.layers[0].weight};
                   }));
  return cases;
}

}  // namespace

std::vector<GradCheckCaseResult> run_gradcheck_suite(const GradCheckOptions& options) {
  std::vector<GradCheckCaseResult> results;
  const auto cases = build_cases(options);
  for (std::size_t c = 0; c < cases.size(); ++c) {
    GradCheckCaseResult r;
    r.name = cases[c].name;
    for (int i = 0; i < options.inputs; ++i) {
      Rng rng(derive_seed(options.seed, {c, static_cast<std::uint64_t>(i)}));
      r.max_relative_error = std::max(r.max_relative_error, cases[c].run(rng, options.h));
      ++r.inputs;
    }
    r.passed = r.max_relative_error < options.tolerance;
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace vrexmix
