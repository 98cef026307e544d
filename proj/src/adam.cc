#include "glyphmatch/adam.h"

#include <cmath>

namespace gm {

void Adam::init(const ParamStore& params) {
  for (const auto& [name, t] : params.values) {
    if (!m_.count(name)) m_[name] = Tensor(t.shape);
    if (!v_.count(name)) v_[name] = Tensor(t.shape);
  }
}

void Adam::step(ParamStore& params) {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : params.values) {
    const Tensor& g = params.grads.at(name);
    Tensor& m = m_.at(name);
    Tensor& v = v_.at(name);
    for (size_t i = 0; i < p.v.size(); ++i) {
      double gi = g.v[i];
      double mi = cfg_.beta1 * m.v[i] + (1.0 - cfg_.beta1) * gi;
      double vi = cfg_.beta2 * v.v[i] + (1.0 - cfg_.beta2) * gi * gi;
      m.v[i] = static_cast<float>(mi);
      v.v[i] = static_cast<float>(vi);
      double mhat = mi / bc1;
      double vhat = vi / bc2;
      p.v[i] = static_cast<float>(p.v[i] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

}  // namespace gm
