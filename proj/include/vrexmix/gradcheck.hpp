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

// Central-difference check of reverse-mode gradients.

#ifndef VREXMIX_GRADCHECK_HPP_
#define VREXMIX_GRADCHECK_HPP_

#include "vrexmix/error.hpp"
#include "vrexmix/tape.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

namespace vrexmix {

template <typename Scalar>
using TracedFunction = std::function<Traced<Scalar>(Tape<Scalar>&, const Traced<Scalar>&)>;

template <typename Scalar>
struct GradCheckResult {
  double max_relative_error = 0.0;
  Eigen::Index worst_index = -1;  // flat row-major index, -1 for an empty point
  Matrix<Scalar> analytic;
  Matrix<Scalar> numeric;
};

/// |a - n| / max(1e-8, |a| + |n|)
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

/// Compares backward() of `f` at `point` against (f(x+h) - f(x-h)) / 2h per
/// component. Throws NumericalError naming the component if any evaluation is
/// not finite.
template <typename Scalar>
GradCheckResult<Scalar> grad_check(const TracedFunction<Scalar>& f, const Matrix<Scalar>& point,
                                   Scalar h) {
  auto evaluate = [&f](const Matrix<Scalar>& x) {
    Tape<Scalar> tape;
    const Traced<Scalar> out = f(tape, tape.constant(x));
    if (!out.is_scalar())
      throw UsageError("grad_check: function must return a scalar, got " +
                       shape_string(out.value()));
    return out.scalar();
  };

  GradCheckResult<Scalar> result;
  {
    Tape<Scalar> tape;
    const Traced<Scalar> x = tape.variable(point);
    const Traced<Scalar> out = f(tape, x);
    if (!std::isfinite(static_cast<double>(out.scalar())))
      throw NumericalError("grad_check: f is not finite at the base point");
    result.analytic = tape.backward(out).of(x);
  }

  result.numeric.resize(point.rows(), point.cols());
  Matrix<Scalar> probe = point;
  for (Eigen::Index k = 0; k < point.size(); ++k) {
    Scalar& slot = probe.data()[k];
    const Scalar saved = slot;
    slot = saved + h;
    const Scalar up = evaluate(probe);
    slot = saved - h;
    const Scalar down = evaluate(probe);
    slot = saved;
    if (!std::isfinite(static_cast<double>(up)) || !std::isfinite(static_cast<double>(down)))
      throw NumericalError("grad_check: f is not finite near component " + std::to_string(k));
    result.numeric.data()[k] = (up - down) / (Scalar(2) * h);

    const double err = relative_error(static_cast<double>(result.analytic.data()[k]),
                                      static_cast<double>(result.numeric.data()[k]));
    if (result.worst_index < 0 || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_index = k;
    }
  }
  return result;
}

}  // namespace vrexmix

#endif  // VREXMIX_GRADCHECK_HPP_
