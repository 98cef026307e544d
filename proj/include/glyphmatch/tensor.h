#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace gm {

class Prng;

// Dense row-major f32 tensor. Shapes are small (<= 4 dims in practice).
struct Tensor {
  std::vector<int> shape;
  std::vector<float> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(static_cast<size_t>(numel_of(shape)), 0.f);
  }
  Tensor(std::vector<int> s, std::vector<float> data) : shape(std::move(s)), v(std::move(data)) {
    if (v.size() != static_cast<size_t>(numel_of(shape)))
      throw std::invalid_argument("tensor data size does not match shape");
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw std::invalid_argument("negative dim");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  float& operator[](size_t i) { return v[i]; }
  float operator[](size_t i) const { return v[i]; }

  // 2d accessors (row major)
  float& at(int r, int c) { return v[static_cast<size_t>(r) * shape[1] + c]; }
  float at(int r, int c) const { return v[static_cast<size_t>(r) * shape[1] + c]; }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, float val) {
    Tensor t(std::move(s));
    for (auto& x : t.v) x = val;
    return t;
  }
  // Xavier-uniform on [-a, a], a = sqrt(6 / (fan_in + fan_out)).
  static Tensor xavier(std::vector<int> s, int fan_in, int fan_out, Prng& rng);
};

class Graph;

struct Node {
  Graph* graph = nullptr;
  const Tensor* vptr = nullptr;  // set for leaves that alias external storage
  Tensor value;                  // owned value otherwise
  Tensor grad;
  bool has_grad = false;      // grad allocated and meaningful
  bool requires_grad = false; // gradient flows into this node
  std::function<void(Node&)> backward_fn;

  const Tensor& val() const { return vptr ? *vptr : value; }
  // accumulate into grad, allocating lazily
  void accum(const Tensor& g);
  void accum_raw(const float* g, size_t n);
  Tensor& ensure_grad();
};

using Var = Node*;

// Parameter set: named value tensors plus a parallel set of gradient
// accumulators. Iteration order is the name order (std::map), which keeps
// every reduction deterministic.
struct ParamStore {
  std::map<std::string, Tensor> values;
  std::map<std::string, Tensor> grads;

  Tensor& add(const std::string& name, Tensor init) {
    if (values.count(name)) throw std::invalid_argument("duplicate param: " + name);
    grads[name] = Tensor(init.shape);
    return values[name] = std::move(init);
  }
  bool has(const std::string& name) const { return values.count(name) != 0; }
  Tensor& value(const std::string& name) { return values.at(name); }
  void zero_grads() {
    for (auto& [k, g] : grads)
      for (auto& x : g.v) x = 0.f;
  }
};

// One forward/backward tape. Nodes are created in topological order by
// construction; backward walks them in reverse.
class Graph {
 public:
  Var leaf(Tensor value, bool requires_grad = false);
  // leaf aliasing external storage (no copy); `track` adds it to the list
  // used by accumulate_param_grads
  Var param(const std::string& name, ParamStore& store);
  // leaf aliasing an external tensor that wants gradients (graph stitching)
  Var external(const Tensor& value);

  // generic op node
  Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

  // Backward from `root`. If seed is null the root must be scalar (numel 1)
  // and is seeded with 1. Otherwise seed must match the root's shape.
  void backward(Var root, const Tensor* seed = nullptr);

  // adds each tracked param leaf's grad into store.grads, in creation order
  void accumulate_param_grads(ParamStore& store);

  size_t size() const { return nodes_.size(); }

 private:
  std::deque<Node> nodes_;
  std::vector<std::pair<Node*, std::string>> param_leaves_;
};

// ---- ops ----
// All ops validate shapes and throw std::invalid_argument with a message
// naming the offending dimension.

Var add(Var a, Var b);                   // same shape
Var sub(Var a, Var b);
Var mul(Var a, Var b);                   // elementwise
Var scale(Var a, float c);
Var scale_by(Var a, Var s);              // s is a 1-element tensor, broadcast multiply
Var add_scaled(Var a, Var b, float c);   // a + c*b, same shape
Var relu(Var a);
Var clampv(Var a, float lo, float hi);   // grad passes where lo <= x <= hi
Var matmul(Var a, Var b);                // (m,k)x(k,n)
Var transpose(Var a);                    // 2d
Var add_rowvec(Var a, Var r);            // (m,n) + (n,) broadcast over rows
Var slice_cols(Var a, int start, int len);
Var reshape(Var a, std::vector<int> shape);  // same numel, same data order
Var concat_cols(const std::vector<Var>& parts);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var l2_normalize_rows(Var a, float eps = 1e-8f);
Var layernorm_rows(Var a, Var gain, Var bias, float eps = 1e-5f);   // 2d, per row over cols
Var weighted_sum(Var a, Tensor weights); // sum(a*w) -> scalar, w constant

// image stack ops, layout (C, H, W)
Var conv2d(Var x, Var w, Var b);                       // 3x3 or 1x1, stride 1, same padding
Var maxpool2d(Var x, int ph, int pw);
Var avgpool2d(Var x, int ph, int pw);
Var upsample2x(Var x);                                 // bilinear, align_corners=false
Var concat_channels(Var a, Var b);
Var layernorm_channels(Var x, Var gain, Var bias, float eps = 1e-5f);  // per (h,w) over C
// (C, H, W) -> (W, H*C): column features for a height-collapsed feature map
Var stack_columns(Var x);

}  // namespace gm
