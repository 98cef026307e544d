#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "glyphmatch/tensor.h"

namespace gmtest {

// Central-difference gradient check. `build` assembles a scalar loss from
// leaf nodes created out of `inputs`; it runs once per perturbation, so keep
// the graphs small. Relative tolerance against max(1, |analytic|, |numeric|).
template <class BuildFn>
bool check_gradients(std::vector<gm::Tensor> inputs, BuildFn build, double step, double tol,
                     std::string* msg = nullptr) {
  auto eval = [&](const std::vector<gm::Tensor>& vals, std::vector<gm::Tensor>* grads) {
    gm::Graph g;
    std::vector<gm::Var> leaves;
    leaves.reserve(vals.size());
    for (const auto& t : vals) leaves.push_back(g.leaf(t, true));
    gm::Var loss = build(g, leaves);
    double out = loss->val().v[0];
    if (grads) {
      g.backward(loss);
      grads->clear();
      for (gm::Var l : leaves)
        grads->push_back(l->has_grad ? l->grad : gm::Tensor(l->val().shape));
    }
    return out;
  };

  std::vector<gm::Tensor> analytic;
  eval(inputs, &analytic);

  for (size_t t = 0; t < inputs.size(); ++t) {
    for (size_t i = 0; i < inputs[t].v.size(); ++i) {
      float orig = inputs[t].v[i];
      inputs[t].v[i] = static_cast<float>(orig + step);
      double up = eval(inputs, nullptr);
      inputs[t].v[i] = static_cast<float>(orig - step);
      double dn = eval(inputs, nullptr);
      inputs[t].v[i] = orig;
      double num = (up - dn) / (2.0 * step);
      double ana = analytic[t].v[i];
      double denom = std::max({1.0, std::fabs(num), std::fabs(ana)});
      if (std::fabs(num - ana) / denom > tol) {
        if (msg)
          *msg = "tensor " + std::to_string(t) + " elem " + std::to_string(i) + ": analytic " +
                 std::to_string(ana) + " vs numeric " + std::to_string(num);
        return false;
      }
    }
  }
  return true;
}

}  // namespace gmtest
