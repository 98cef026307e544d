#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "glyphmatch/tensor.h"

namespace gm {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam over a ParamStore. Moment tensors are stored f32 next to the params
// (they travel with checkpoints); the per-element update math runs in double.
class Adam {
 public:
  explicit Adam(const AdamConfig& cfg = {}) : cfg_(cfg) {}

  void init(const ParamStore& params);  // allocate zero moments for each param
  void step(ParamStore& params);        // consumes params.grads, advances t

  AdamConfig& config() { return cfg_; }
  int64_t iteration() const { return t_; }
  void set_iteration(int64_t t) { t_ = t; }

  std::map<std::string, Tensor>& m() { return m_; }
  std::map<std::string, Tensor>& v() { return v_; }
  const std::map<std::string, Tensor>& m() const { return m_; }
  const std::map<std::string, Tensor>& v() const { return v_; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

}  // namespace gm
