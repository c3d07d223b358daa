#pragma once

#include "cdsr/autodiff.hpp"
#include "cdsr/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace cdsr::test {

using BuildFn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

// Max relative error between tape gradients and central finite differences,
// taken over every entry of every input. rel = |ga - gn| / max(|ga|, |gn|, 1e-8).
inline double fd_max_rel_err(const std::vector<Mat>& inputs, const BuildFn& build,
                             double h = 1e-5) {
  auto eval = [&](const std::vector<Mat>& ins) {
    ad::Tape t;
    std::vector<ad::Var> vars;
    vars.reserve(ins.size());
    for (const auto& m : ins) vars.push_back(t.leaf(m));
    return t.val(build(t, vars))(0, 0);
  };

  ad::Tape t;
  std::vector<ad::Var> vars;
  vars.reserve(inputs.size());
  for (const auto& m : inputs) vars.push_back(t.leaf(m));
  ad::Var root = build(t, vars);
  t.backward(root);

  double worst = 0.0;
  for (size_t k = 0; k < inputs.size(); ++k) {
    Mat analytic = t.grad(vars[k]);
    for (int i = 0; i < inputs[k].rows(); ++i) {
      for (int j = 0; j < inputs[k].cols(); ++j) {
        std::vector<Mat> plus = inputs;
        std::vector<Mat> minus = inputs;
        plus[k](i, j) += h;
        minus[k](i, j) -= h;
        double fd = (eval(plus) - eval(minus)) / (2.0 * h);
        double denom = std::max({std::abs(fd), std::abs(analytic(i, j)), 1e-8});
        worst = std::max(worst, std::abs(fd - analytic(i, j)) / denom);
      }
    }
  }
  return worst;
}

}  // namespace cdsr::test
