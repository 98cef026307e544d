#include "glyphmatch/tensor.h"

#include <cmath>

#include "glyphmatch/prng.h"

namespace gm {

Tensor Tensor::xavier(std::vector<int> s, int fan_in, int fan_out, Prng& rng) {
  Tensor t(std::move(s));
  double a = std::sqrt(6.0 / (double(fan_in) + double(fan_out)));
  for (auto& x : t.v) x = static_cast<float>(rng.uniform(-a, a));
  return t;
}

Tensor& Node::ensure_grad() {
  if (!has_grad) {
    grad = Tensor(val().shape);
    has_grad = true;
  }
  return grad;
}

void Node::accum(const Tensor& g) {
  if (g.shape != val().shape) throw std::invalid_argument("grad shape mismatch");
  accum_raw(g.v.data(), g.v.size());
}

void Node::accum_raw(const float* g, size_t n) {
  Tensor& dst = ensure_grad();
  if (dst.v.size() != n) throw std::invalid_argument("grad size mismatch");
  float* d = dst.v.data();
  for (size_t i = 0; i < n; ++i) d[i] += g[i];
}

Var Graph::leaf(Tensor value, bool requires_grad) {
  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.graph = this;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return &n;
}

Var Graph::param(const std::string& name, ParamStore& store) {
  auto it = store.values.find(name);
  if (it == store.values.end()) throw std::invalid_argument("unknown param: " + name);
  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.graph = this;
  n.vptr = &it->second;
  n.requires_grad = true;
  param_leaves_.emplace_back(&n, name);
  return &n;
}

Var Graph::external(const Tensor& value) {
  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.graph = this;
  n.vptr = &value;
  n.requires_grad = true;
  return &n;
}

Var Graph::make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.graph = this;
  n.value = std::move(value);
  for (Var p : parents) {
    if (p->graph != this) throw std::invalid_argument("op inputs belong to different graphs");
    n.requires_grad = n.requires_grad || p->requires_grad;
  }
  if (n.requires_grad) n.backward_fn = std::move(backward_fn);
  return &n;
}

void Graph::backward(Var root, const Tensor* seed) {
  if (root->graph != this) throw std::invalid_argument("root not in this graph");
  if (seed) {
    if (seed->shape != root->val().shape) throw std::invalid_argument("seed shape mismatch");
    root->accum(*seed);
  } else {
    if (root->val().numel() != 1)
      throw std::invalid_argument("backward without seed requires a scalar root");
    Tensor one(root->val().shape);
    one.v[0] = 1.f;
    root->accum(one);
  }
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = *it;
    if (n.has_grad && n.backward_fn) n.backward_fn(n);
  }
}

void Graph::accumulate_param_grads(ParamStore& store) {
  for (auto& [node, name] : param_leaves_) {
    if (!node->has_grad) continue;
    Tensor& dst = store.grads.at(name);
    const float* g = node->grad.v.data();
    for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += g[i];
  }
}

}  // namespace gm
