#include <Eigen/Dense>
#include <cmath>
#include <memory>

#include "glyphmatch/tensor.h"

namespace gm {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

static void want_ndim(Var a, int nd, const char* op) {
  if (a->val().ndim() != nd)
    throw std::invalid_argument(std::string(op) + ": expected " + std::to_string(nd) + "-d tensor, got " +
                                std::to_string(a->val().ndim()) + "-d");
}

static void want_same_shape(Var a, Var b, const char* op) {
  if (a->val().shape != b->val().shape)
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

Var add(Var a, Var b) {
  want_same_shape(a, b, "add");
  Tensor out(a->val().shape);
  const auto& av = a->val().v;
  const auto& bv = b->val().v;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = av[i] + bv[i];
  return a->graph->make(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->accum_raw(n.grad.v.data(), n.grad.v.size());
    if (b->requires_grad) b->accum_raw(n.grad.v.data(), n.grad.v.size());
  });
}

Var sub(Var a, Var b) { return add_scaled(a, b, -1.f); }

Var add_scaled(Var a, Var b, float c) {
  want_same_shape(a, b, "add_scaled");
  Tensor out(a->val().shape);
  const auto& av = a->val().v;
  const auto& bv = b->val().v;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = av[i] + c * bv[i];
  return a->graph->make(std::move(out), {a, b}, [a, b, c](Node& n) {
    if (a->requires_grad) a->accum_raw(n.grad.v.data(), n.grad.v.size());
    if (b->requires_grad) {
      Tensor g(n.grad.shape);
      for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = c * n.grad.v[i];
      b->accum(g);
    }
  });
}

Var mul(Var a, Var b) {
  want_same_shape(a, b, "mul");
  Tensor out(a->val().shape);
  const auto& av = a->val().v;
  const auto& bv = b->val().v;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = av[i] * bv[i];
  return a->graph->make(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) {
      Tensor g(n.grad.shape);
      const auto& bv2 = b->val().v;
      for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = n.grad.v[i] * bv2[i];
      a->accum(g);
    }
    if (b->requires_grad) {
      Tensor g(n.grad.shape);
      const auto& av2 = a->val().v;
      for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = n.grad.v[i] * av2[i];
      b->accum(g);
    }
  });
}

Var scale(Var a, float c) {
  Tensor out(a->val().shape);
  const auto& av = a->val().v;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = c * av[i];
  return a->graph->make(std::move(out), {a}, [a, c](Node& n) {
    Tensor g(n.grad.shape);
    for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = c * n.grad.v[i];
    a->accum(g);
  });
}

Var scale_by(Var a, Var s) {
  if (s->val().numel() != 1) throw std::invalid_argument("scale_by: scale must be a single element");
  float c = s->val().v[0];
  Tensor out(a->val().shape);
  const auto& av = a->val().v;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = c * av[i];
  return a->graph->make(std::move(out), {a, s}, [a, s, c](Node& n) {
    if (a->requires_grad) {
      Tensor g(n.grad.shape);
      for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = c * n.grad.v[i];
      a->accum(g);
    }
    if (s->requires_grad) {
      double acc = 0.0;
      const auto& av2 = a->val().v;
      for (size_t i = 0; i < n.grad.v.size(); ++i) acc += double(n.grad.v[i]) * av2[i];
      Tensor g(s->val().shape);
      g.v[0] = static_cast<float>(acc);
      s->accum(g);
    }
  });
}

Var relu(Var a) {
  Tensor out(a->val().shape);
  const auto& av = a->val().v;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = av[i] > 0.f ? av[i] : 0.f;
  return a->graph->make(std::move(out), {a}, [a](Node& n) {
    Tensor g(n.grad.shape);
    const auto& av2 = a->val().v;
    for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = av2[i] > 0.f ? n.grad.v[i] : 0.f;
    a->accum(g);
  });
}

Var clampv(Var a, float lo, float hi) {
  Tensor out(a->val().shape);
  const auto& av = a->val().v;
  for (size_t i = 0; i < out.v.size(); ++i) {
    float x = av[i];
    out.v[i] = x < lo ? lo : (x > hi ? hi : x);
  }
  return a->graph->make(std::move(out), {a}, [a, lo, hi](Node& n) {
    Tensor g(n.grad.shape);
    const auto& av2 = a->val().v;
    for (size_t i = 0; i < g.v.size(); ++i)
      g.v[i] = (av2[i] >= lo && av2[i] <= hi) ? n.grad.v[i] : 0.f;
    a->accum(g);
  });
}

Var matmul(Var a, Var b) {
  want_ndim(a, 2, "matmul");
  want_ndim(b, 2, "matmul");
  int m = a->val().dim(0), k = a->val().dim(1);
  int k2 = b->val().dim(0), nn = b->val().dim(1);
  if (k != k2)
    throw std::invalid_argument("matmul: inner dims differ (" + std::to_string(k) + " vs " +
                                std::to_string(k2) + ")");
  Tensor out({m, nn});
  {
    CMapM A(a->val().v.data(), m, k);
    CMapM B(b->val().v.data(), k, nn);
    MapM C(out.v.data(), m, nn);
    C.noalias() = A * B;
  }
  return a->graph->make(std::move(out), {a, b}, [a, b, m, k, nn](Node& n) {
    CMapM dC(n.grad.v.data(), m, nn);
    if (a->requires_grad) {
      CMapM B(b->val().v.data(), k, nn);
      MapM dA(a->ensure_grad().v.data(), m, k);
      dA.noalias() += dC * B.transpose();
    }
    if (b->requires_grad) {
      CMapM A(a->val().v.data(), m, k);
      MapM dB(b->ensure_grad().v.data(), k, nn);
      dB.noalias() += A.transpose() * dC;
    }
  });
}

Var transpose(Var a) {
  want_ndim(a, 2, "transpose");
  int m = a->val().dim(0), nn = a->val().dim(1);
  Tensor out({nn, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < nn; ++j) out.at(j, i) = a->val().at(i, j);
  return a->graph->make(std::move(out), {a}, [a, m, nn](Node& n) {
    Tensor g({m, nn});
    for (int j = 0; j < nn; ++j)
      for (int i = 0; i < m; ++i) g.at(i, j) = n.grad.at(j, i);
    a->accum(g);
  });
}

Var add_rowvec(Var a, Var r) {
  want_ndim(a, 2, "add_rowvec");
  if (r->val().ndim() != 1 || r->val().dim(0) != a->val().dim(1))
    throw std::invalid_argument("add_rowvec: vector length must equal column count");
  int m = a->val().dim(0), nn = a->val().dim(1);
  Tensor out(a->val().shape);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < nn; ++j) out.at(i, j) = a->val().at(i, j) + r->val()[j];
  return a->graph->make(std::move(out), {a, r}, [a, r, m, nn](Node& n) {
    if (a->requires_grad) a->accum_raw(n.grad.v.data(), n.grad.v.size());
    if (r->requires_grad) {
      Tensor g({nn});
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < nn; ++j) g.v[j] += n.grad.at(i, j);
      r->accum(g);
    }
  });
}

Var slice_cols(Var a, int start, int len) {
  want_ndim(a, 2, "slice_cols");
  int m = a->val().dim(0), nn = a->val().dim(1);
  if (start < 0 || len <= 0 || start + len > nn)
    throw std::invalid_argument("slice_cols: range out of bounds");
  Tensor out({m, len});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < len; ++j) out.at(i, j) = a->val().at(i, start + j);
  return a->graph->make(std::move(out), {a}, [a, start, len, m, nn](Node& n) {
    Tensor g({m, nn});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < len; ++j) g.at(i, start + j) = n.grad.at(i, j);
    a->accum(g);
  });
}

Var reshape(Var a, std::vector<int> shape) {
  if (Tensor::numel_of(shape) != a->val().numel())
    throw std::invalid_argument("reshape: element count mismatch");
  Tensor out(shape, a->val().v);
  return a->graph->make(std::move(out), {a}, [a](Node& n) {
    a->accum_raw(n.grad.v.data(), n.grad.v.size());
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  int m = parts[0]->val().dim(0);
  int total = 0;
  for (Var p : parts) {
    want_ndim(p, 2, "concat_cols");
    if (p->val().dim(0) != m) throw std::invalid_argument("concat_cols: row counts differ");
    total += p->val().dim(1);
  }
  Tensor out({m, total});
  int off = 0;
  for (Var p : parts) {
    int w = p->val().dim(1);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j) out.at(i, off + j) = p->val().at(i, j);
    off += w;
  }
  std::vector<Var> ps = parts;
  return parts[0]->graph->make(std::move(out), ps, [ps, m](Node& n) {
    int off2 = 0;
    for (Var p : ps) {
      int w = p->val().dim(1);
      if (p->requires_grad) {
        Tensor g({m, w});
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < w; ++j) g.at(i, j) = n.grad.at(i, off2 + j);
        p->accum(g);
      }
      off2 += w;
    }
  });
}

Var softmax_rows(Var a) {
  want_ndim(a, 2, "softmax_rows");
  int m = a->val().dim(0), nn = a->val().dim(1);
  Tensor out(a->val().shape);
  for (int i = 0; i < m; ++i) {
    float mx = a->val().at(i, 0);
    for (int j = 1; j < nn; ++j) mx = std::max(mx, a->val().at(i, j));
    float s = 0.f;
    for (int j = 0; j < nn; ++j) {
      float e = std::exp(a->val().at(i, j) - mx);
      out.at(i, j) = e;
      s += e;
    }
    float inv = 1.f / s;
    for (int j = 0; j < nn; ++j) out.at(i, j) *= inv;
  }
  return a->graph->make(std::move(out), {a}, [a, m, nn](Node& n) {
    Tensor g({m, nn});
    for (int i = 0; i < m; ++i) {
      float dot = 0.f;
      for (int j = 0; j < nn; ++j) dot += n.grad.at(i, j) * n.value.at(i, j);
      for (int j = 0; j < nn; ++j)
        g.at(i, j) = n.value.at(i, j) * (n.grad.at(i, j) - dot);
    }
    a->accum(g);
  });
}

Var log_softmax_rows(Var a) {
  want_ndim(a, 2, "log_softmax_rows");
  int m = a->val().dim(0), nn = a->val().dim(1);
  Tensor out(a->val().shape);
  for (int i = 0; i < m; ++i) {
    float mx = a->val().at(i, 0);
    for (int j = 1; j < nn; ++j) mx = std::max(mx, a->val().at(i, j));
    double s = 0.0;
    for (int j = 0; j < nn; ++j) s += std::exp(double(a->val().at(i, j)) - mx);
    float lse = mx + static_cast<float>(std::log(s));
    for (int j = 0; j < nn; ++j) out.at(i, j) = a->val().at(i, j) - lse;
  }
  return a->graph->make(std::move(out), {a, }, [a, m, nn](Node& n) {
    Tensor g({m, nn});
    for (int i = 0; i < m; ++i) {
      float s = 0.f;
      for (int j = 0; j < nn; ++j) s += n.grad.at(i, j);
      for (int j = 0; j < nn; ++j)
        g.at(i, j) = n.grad.at(i, j) - std::exp(n.value.at(i, j)) * s;
    }
    a->accum(g);
  });
}

Var l2_normalize_rows(Var a, float eps) {
  want_ndim(a, 2, "l2_normalize_rows");
  int m = a->val().dim(0), nn = a->val().dim(1);
  Tensor out(a->val().shape);
  auto norms = std::make_shared<std::vector<float>>(m);
  // Rows above the floor divide by their exact norm; rows below it divide by
  // the floor instead. Degenerate rows thus map near zero with a bounded
  // Jacobian (plain 1/eps scaling) rather than exploding as the norm vanishes.
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < nn; ++j) {
      float x = a->val().at(i, j);
      s += double(x) * x;
    }
    float norm = static_cast<float>(std::sqrt(s));
    (*norms)[i] = norm;
    float inv = 1.f / std::max(norm, eps);
    for (int j = 0; j < nn; ++j) out.at(i, j) = a->val().at(i, j) * inv;
  }
  return a->graph->make(std::move(out), {a}, [a, m, nn, eps, norms](Node& n) {
    Tensor g({m, nn});
    for (int i = 0; i < m; ++i) {
      float norm = (*norms)[i];
      if (norm > eps) {
        double dot = 0.0;
        for (int j = 0; j < nn; ++j) dot += double(a->val().at(i, j)) * n.grad.at(i, j);
        float s = 1.f / norm;
        float c = static_cast<float>(dot) * s * s * s;
        for (int j = 0; j < nn; ++j)
          g.at(i, j) = s * n.grad.at(i, j) - c * a->val().at(i, j);
      } else {
        float s = 1.f / eps;
        for (int j = 0; j < nn; ++j) g.at(i, j) = s * n.grad.at(i, j);
      }
    }
    a->accum(g);
  });
}

Var layernorm_rows(Var a, Var gain, Var bias, float eps) {
  want_ndim(a, 2, "layernorm_rows");
  int m = a->val().dim(0), nn = a->val().dim(1);
  if (gain->val().ndim() != 1 || gain->val().dim(0) != nn || bias->val().ndim() != 1 ||
      bias->val().dim(0) != nn)
    throw std::invalid_argument("layernorm_rows: gain/bias must be 1-d of width " + std::to_string(nn));
  Tensor out(a->val().shape);
  auto xhat = std::make_shared<Tensor>(a->val().shape);
  auto istd = std::make_shared<std::vector<float>>(m);
  for (int i = 0; i < m; ++i) {
    double mean = 0.0;
    for (int j = 0; j < nn; ++j) mean += a->val().at(i, j);
    mean /= nn;
    double var = 0.0;
    for (int j = 0; j < nn; ++j) {
      double d = a->val().at(i, j) - mean;
      var += d * d;
    }
    var /= nn;
    float is = static_cast<float>(1.0 / std::sqrt(var + eps));
    (*istd)[i] = is;
    for (int j = 0; j < nn; ++j) {
      float xh = (a->val().at(i, j) - static_cast<float>(mean)) * is;
      xhat->at(i, j) = xh;
      out.at(i, j) = xh * gain->val()[j] + bias->val()[j];
    }
  }
  return a->graph->make(std::move(out), {a, gain, bias}, [a, gain, bias, m, nn, xhat, istd](Node& n) {
    if (gain->requires_grad) {
      Tensor gg({nn});
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < nn; ++j) gg.v[j] += n.grad.at(i, j) * xhat->at(i, j);
      gain->accum(gg);
    }
    if (bias->requires_grad) {
      Tensor gb({nn});
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < nn; ++j) gb.v[j] += n.grad.at(i, j);
      bias->accum(gb);
    }
    if (a->requires_grad) {
      Tensor g({m, nn});
      for (int i = 0; i < m; ++i) {
        double mean_dxh = 0.0, mean_dxh_xh = 0.0;
        for (int j = 0; j < nn; ++j) {
          float dxh = n.grad.at(i, j) * gain->val()[j];
          mean_dxh += dxh;
          mean_dxh_xh += double(dxh) * xhat->at(i, j);
        }
        mean_dxh /= nn;
        mean_dxh_xh /= nn;
        for (int j = 0; j < nn; ++j) {
          float dxh = n.grad.at(i, j) * gain->val()[j];
          g.at(i, j) = (*istd)[i] * static_cast<float>(dxh - mean_dxh - xhat->at(i, j) * mean_dxh_xh);
        }
      }
      a->accum(g);
    }
  });
}

Var weighted_sum(Var a, Tensor weights) {
  if (weights.shape != a->val().shape)
    throw std::invalid_argument("weighted_sum: weight shape mismatch");
  double s = 0.0;
  for (size_t i = 0; i < weights.v.size(); ++i) s += double(weights.v[i]) * a->val().v[i];
  Tensor out({1});
  out.v[0] = static_cast<float>(s);
  auto w = std::make_shared<Tensor>(std::move(weights));
  return a->graph->make(std::move(out), {a}, [a, w](Node& n) {
    Tensor g(a->val().shape);
    float seed = n.grad.v[0];
    for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = seed * w->v[i];
    a->accum(g);
  });
}

// ---- (C, H, W) image stack ops ----

static void want_chw(Var x, const char* op) {
  if (x->val().ndim() != 3)
    throw std::invalid_argument(std::string(op) + ": expected (C,H,W) tensor");
}

static void im2col(const Tensor& x, int kh, int kw, float* cols) {
  // cols is (C*kh*kw) x (H*W), same padding, stride 1
  int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  int ph = kh / 2, pw = kw / 2;
  size_t n = static_cast<size_t>(H) * W;
  size_t row = 0;
  for (int c = 0; c < C; ++c) {
    const float* xc = x.v.data() + static_cast<size_t>(c) * H * W;
    for (int dy = -ph; dy <= kh - 1 - ph; ++dy) {
      for (int dx = -pw; dx <= kw - 1 - pw; ++dx, ++row) {
        float* dst = cols + row * n;
        for (int y = 0; y < H; ++y) {
          int sy = y + dy;
          if (sy < 0 || sy >= H) {
            for (int xx = 0; xx < W; ++xx) dst[y * W + xx] = 0.f;
            continue;
          }
          const float* src = xc + static_cast<size_t>(sy) * W;
          for (int xx = 0; xx < W; ++xx) {
            int sx = xx + dx;
            dst[y * W + xx] = (sx < 0 || sx >= W) ? 0.f : src[sx];
          }
        }
      }
    }
  }
}

static void col2im_accum(const float* cols, int C, int H, int W, int kh, int kw, float* dx) {
  int ph = kh / 2, pw = kw / 2;
  size_t n = static_cast<size_t>(H) * W;
  size_t row = 0;
  for (int c = 0; c < C; ++c) {
    float* xc = dx + static_cast<size_t>(c) * H * W;
    for (int dy = -ph; dy <= kh - 1 - ph; ++dy) {
      for (int dx2 = -pw; dx2 <= kw - 1 - pw; ++dx2, ++row) {
        const float* src = cols + row * n;
        for (int y = 0; y < H; ++y) {
          int sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          float* dst = xc + static_cast<size_t>(sy) * W;
          for (int xx = 0; xx < W; ++xx) {
            int sx = xx + dx2;
            if (sx >= 0 && sx < W) dst[sx] += src[y * W + xx];
          }
        }
      }
    }
  }
}

Var conv2d(Var x, Var w, Var b) {
  want_chw(x, "conv2d");
  if (w->val().ndim() != 4) throw std::invalid_argument("conv2d: weight must be (Cout,Cin,kh,kw)");
  int C = x->val().dim(0), H = x->val().dim(1), W = x->val().dim(2);
  int Cout = w->val().dim(0), Cin = w->val().dim(1), kh = w->val().dim(2), kw = w->val().dim(3);
  if (Cin != C)
    throw std::invalid_argument("conv2d: input has " + std::to_string(C) + " channels, weight expects " +
                                std::to_string(Cin));
  if (kh % 2 == 0 || kw % 2 == 0) throw std::invalid_argument("conv2d: kernel dims must be odd");
  if (b->val().ndim() != 1 || b->val().dim(0) != Cout)
    throw std::invalid_argument("conv2d: bias must be (Cout)");

  int K = C * kh * kw;
  size_t n = static_cast<size_t>(H) * W;
  std::vector<float> cols(static_cast<size_t>(K) * n);
  im2col(x->val(), kh, kw, cols.data());

  Tensor out({Cout, H, W});
  {
    CMapM Wm(w->val().v.data(), Cout, K);
    CMapM Cm(cols.data(), K, static_cast<int>(n));
    MapM Om(out.v.data(), Cout, static_cast<int>(n));
    Om.noalias() = Wm * Cm;
  }
  for (int c = 0; c < Cout; ++c) {
    float bias = b->val()[c];
    float* oc = out.v.data() + static_cast<size_t>(c) * n;
    for (size_t i = 0; i < n; ++i) oc[i] += bias;
  }

  return x->graph->make(std::move(out), {x, w, b}, [x, w, b, C, H, W, Cout, kh, kw, K, n](Node& nd) {
    CMapM dO(nd.grad.v.data(), Cout, static_cast<int>(n));
    if (w->requires_grad || x->requires_grad) {
      if (w->requires_grad) {
        // recompute the patch matrix rather than storing it
        std::vector<float> cols(static_cast<size_t>(K) * n);
        im2col(x->val(), kh, kw, cols.data());
        CMapM Cm(cols.data(), K, static_cast<int>(n));
        MapM dW(w->ensure_grad().v.data(), Cout, K);
        dW.noalias() += dO * Cm.transpose();
      }
      if (x->requires_grad) {
        std::vector<float> dcols(static_cast<size_t>(K) * n);
        CMapM Wm(w->val().v.data(), Cout, K);
        MapM dCm(dcols.data(), K, static_cast<int>(n));
        dCm.noalias() = Wm.transpose() * dO;
        col2im_accum(dcols.data(), C, H, W, kh, kw, x->ensure_grad().v.data());
      }
    }
    if (b->requires_grad) {
      Tensor gb({Cout});
      for (int c = 0; c < Cout; ++c) {
        double s = 0.0;
        const float* gc = nd.grad.v.data() + static_cast<size_t>(c) * n;
        for (size_t i = 0; i < n; ++i) s += gc[i];
        gb.v[c] = static_cast<float>(s);
      }
      b->accum(gb);
    }
  });
}

Var maxpool2d(Var x, int ph, int pw) {
  want_chw(x, "maxpool2d");
  int C = x->val().dim(0), H = x->val().dim(1), W = x->val().dim(2);
  if (ph <= 0 || pw <= 0 || H % ph || W % pw)
    throw std::invalid_argument("maxpool2d: input " + std::to_string(H) + "x" + std::to_string(W) +
                                " not divisible by window " + std::to_string(ph) + "x" + std::to_string(pw));
  int Ho = H / ph, Wo = W / pw;
  Tensor out({C, Ho, Wo});
  auto arg = std::make_shared<std::vector<int>>(out.v.size());
  for (int c = 0; c < C; ++c)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        float best = -1e30f;
        int besti = 0;
        for (int dy = 0; dy < ph; ++dy)
          for (int dx = 0; dx < pw; ++dx) {
            int idx = (c * H + oy * ph + dy) * W + ox * pw + dx;
            float v = x->val().v[idx];
            if (v > best) {
              best = v;
              besti = idx;
            }
          }
        size_t o = (static_cast<size_t>(c) * Ho + oy) * Wo + ox;
        out.v[o] = best;
        (*arg)[o] = besti;
      }
  return x->graph->make(std::move(out), {x}, [x, arg](Node& n) {
    Tensor& gx = x->ensure_grad();
    for (size_t o = 0; o < n.grad.v.size(); ++o) gx.v[(*arg)[o]] += n.grad.v[o];
  });
}

Var avgpool2d(Var x, int ph, int pw) {
  want_chw(x, "avgpool2d");
  int C = x->val().dim(0), H = x->val().dim(1), W = x->val().dim(2);
  if (ph <= 0 || pw <= 0 || H % ph || W % pw)
    throw std::invalid_argument("avgpool2d: input " + std::to_string(H) + "x" + std::to_string(W) +
                                " not divisible by window " + std::to_string(ph) + "x" + std::to_string(pw));
  int Ho = H / ph, Wo = W / pw;
  Tensor out({C, Ho, Wo});
  float inv = 1.f / (ph * pw);
  for (int c = 0; c < C; ++c)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        float s = 0.f;
        for (int dy = 0; dy < ph; ++dy)
          for (int dx = 0; dx < pw; ++dx) s += x->val().v[(c * H + oy * ph + dy) * W + ox * pw + dx];
        out.v[(static_cast<size_t>(c) * Ho + oy) * Wo + ox] = s * inv;
      }
  return x->graph->make(std::move(out), {x}, [x, C, H, W, ph, pw, Ho, Wo, inv](Node& n) {
    Tensor& gx = x->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          float g = n.grad.v[(static_cast<size_t>(c) * Ho + oy) * Wo + ox] * inv;
          for (int dy = 0; dy < ph; ++dy)
            for (int dx = 0; dx < pw; ++dx) gx.v[(c * H + oy * ph + dy) * W + ox * pw + dx] += g;
        }
  });
}

Var upsample2x(Var x) {
  want_chw(x, "upsample2x");
  int C = x->val().dim(0), H = x->val().dim(1), W = x->val().dim(2);
  int Ho = H * 2, Wo = W * 2;
  Tensor out({C, Ho, Wo});
  // bilinear, align_corners = false: src = (dst + 0.5)/2 - 0.5, edges clamped
  auto taps = [](int o, int n, int& i0, int& i1, float& w1) {
    float s = 0.5f * (o + 0.5f) - 0.5f;
    int f = static_cast<int>(std::floor(s));
    w1 = s - f;
    i0 = std::min(std::max(f, 0), n - 1);
    i1 = std::min(std::max(f + 1, 0), n - 1);
  };
  for (int c = 0; c < C; ++c)
    for (int oy = 0; oy < Ho; ++oy) {
      int y0, y1;
      float wy;
      taps(oy, H, y0, y1, wy);
      for (int ox = 0; ox < Wo; ++ox) {
        int x0, x1;
        float wx;
        taps(ox, W, x0, x1, wx);
        const float* xc = x->val().v.data() + static_cast<size_t>(c) * H * W;
        float v = (1 - wy) * ((1 - wx) * xc[y0 * W + x0] + wx * xc[y0 * W + x1]) +
                  wy * ((1 - wx) * xc[y1 * W + x0] + wx * xc[y1 * W + x1]);
        out.v[(static_cast<size_t>(c) * Ho + oy) * Wo + ox] = v;
      }
    }
  return x->graph->make(std::move(out), {x}, [x, C, H, W, Ho, Wo, taps](Node& n) {
    Tensor& gx = x->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < Ho; ++oy) {
        int y0, y1;
        float wy;
        taps(oy, H, y0, y1, wy);
        for (int ox = 0; ox < Wo; ++ox) {
          int x0, x1;
          float wx;
          taps(ox, W, x0, x1, wx);
          float g = n.grad.v[(static_cast<size_t>(c) * Ho + oy) * Wo + ox];
          float* gc = gx.v.data() + static_cast<size_t>(c) * H * W;
          gc[y0 * W + x0] += (1 - wy) * (1 - wx) * g;
          gc[y0 * W + x1] += (1 - wy) * wx * g;
          gc[y1 * W + x0] += wy * (1 - wx) * g;
          gc[y1 * W + x1] += wy * wx * g;
        }
      }
  });
}

Var concat_channels(Var a, Var b) {
  want_chw(a, "concat_channels");
  want_chw(b, "concat_channels");
  if (a->val().dim(1) != b->val().dim(1) || a->val().dim(2) != b->val().dim(2))
    throw std::invalid_argument("concat_channels: spatial dims differ");
  int Ca = a->val().dim(0), Cb = b->val().dim(0), H = a->val().dim(1), W = a->val().dim(2);
  Tensor out({Ca + Cb, H, W});
  size_t na = static_cast<size_t>(Ca) * H * W, nb = static_cast<size_t>(Cb) * H * W;
  std::copy(a->val().v.begin(), a->val().v.end(), out.v.begin());
  std::copy(b->val().v.begin(), b->val().v.end(), out.v.begin() + na);
  return a->graph->make(std::move(out), {a, b}, [a, b, na, nb](Node& n) {
    if (a->requires_grad) a->accum_raw(n.grad.v.data(), na);
    if (b->requires_grad) b->accum_raw(n.grad.v.data() + na, nb);
  });
}

Var layernorm_channels(Var x, Var gain, Var bias, float eps) {
  want_chw(x, "layernorm_channels");
  int C = x->val().dim(0), H = x->val().dim(1), W = x->val().dim(2);
  if (gain->val().ndim() != 1 || gain->val().dim(0) != C || bias->val().ndim() != 1 ||
      bias->val().dim(0) != C)
    throw std::invalid_argument("layernorm_channels: gain/bias must be 1-d of length C");
  size_t hw = static_cast<size_t>(H) * W;
  Tensor out(x->val().shape);
  auto xhat = std::make_shared<Tensor>(x->val().shape);
  auto istd = std::make_shared<std::vector<float>>(hw);
  for (size_t p = 0; p < hw; ++p) {
    double mean = 0.0;
    for (int c = 0; c < C; ++c) mean += x->val().v[c * hw + p];
    mean /= C;
    double var = 0.0;
    for (int c = 0; c < C; ++c) {
      double d = x->val().v[c * hw + p] - mean;
      var += d * d;
    }
    var /= C;
    float is = static_cast<float>(1.0 / std::sqrt(var + eps));
    (*istd)[p] = is;
    for (int c = 0; c < C; ++c) {
      float xh = (x->val().v[c * hw + p] - static_cast<float>(mean)) * is;
      xhat->v[c * hw + p] = xh;
      out.v[c * hw + p] = xh * gain->val()[c] + bias->val()[c];
    }
  }
  return x->graph->make(std::move(out), {x, gain, bias}, [x, gain, bias, C, hw, xhat, istd](Node& n) {
    if (gain->requires_grad) {
      Tensor gg({C});
      for (int c = 0; c < C; ++c) {
        double s = 0.0;
        for (size_t p = 0; p < hw; ++p) s += double(n.grad.v[c * hw + p]) * xhat->v[c * hw + p];
        gg.v[c] = static_cast<float>(s);
      }
      gain->accum(gg);
    }
    if (bias->requires_grad) {
      Tensor gb({C});
      for (int c = 0; c < C; ++c) {
        double s = 0.0;
        for (size_t p = 0; p < hw; ++p) s += n.grad.v[c * hw + p];
        gb.v[c] = static_cast<float>(s);
      }
      bias->accum(gb);
    }
    if (x->requires_grad) {
      Tensor g(x->val().shape);
      for (size_t p = 0; p < hw; ++p) {
        double mean_dxh = 0.0, mean_dxh_xh = 0.0;
        for (int c = 0; c < C; ++c) {
          float dxh = n.grad.v[c * hw + p] * gain->val()[c];
          mean_dxh += dxh;
          mean_dxh_xh += double(dxh) * xhat->v[c * hw + p];
        }
        mean_dxh /= C;
        mean_dxh_xh /= C;
        for (int c = 0; c < C; ++c) {
          float dxh = n.grad.v[c * hw + p] * gain->val()[c];
          g.v[c * hw + p] =
              (*istd)[p] * static_cast<float>(dxh - mean_dxh - xhat->v[c * hw + p] * mean_dxh_xh);
        }
      }
      x->accum(g);
    }
  });
}

Var stack_columns(Var x) {
  want_chw(x, "stack_columns");
  int C = x->val().dim(0), H = x->val().dim(1), W = x->val().dim(2);
  Tensor out({W, H * C});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx) out.at(xx, y * C + c) = x->val().v[(c * H + y) * W + xx];
  return x->graph->make(std::move(out), {x}, [x, C, H, W](Node& n) {
    Tensor g({C, H, W});
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) g.v[(c * H + y) * W + xx] = n.grad.at(xx, y * C + c);
    x->accum(g);
  });
}

}  // namespace gm
