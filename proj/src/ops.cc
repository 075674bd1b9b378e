#include "hsvc/ops.h"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hsvc::nn {

namespace {

// Index range [lo, hi) of t such that 0 <= t * stride + offset < length,
// clipped to [0, limit).
std::pair<long, long> valid_range(long offset, long stride, long length, long limit) {
  long lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  long hi = length - 1 - offset < 0 ? 0 : (length - 1 - offset) / stride + 1;
  if (hi > limit) hi = limit;
  if (lo > hi) lo = hi;
  return {lo, hi};
}

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace

Var conv1d(const Var& x, const Var& weight, const Var& bias, const Conv1dSpec& spec) {
  const Tensor& xv = x->value;
  const Tensor& wv = weight->value;
  require(xv.rank() == 2 && wv.rank() == 3, "conv1d: expected 2-D input and 3-D weight");
  const long cin = static_cast<long>(xv.dim(0));
  const long T = static_cast<long>(xv.dim(1));
  const long cout = static_cast<long>(wv.dim(0));
  const long cg = static_cast<long>(wv.dim(1));
  const long K = static_cast<long>(wv.dim(2));
  const long s = spec.stride, d = spec.dilation, pl = spec.pad_left, groups = spec.groups;
  require(groups >= 1 && cin == cg * groups && cout % groups == 0,
          "conv1d: channel/group mismatch (in " + std::to_string(cin) + ", weight " +
              wv.shape_string() + ", groups " + std::to_string(groups) + ")");
  require(!bias || bias->value.size() == static_cast<std::size_t>(cout), "conv1d: bias size");
  const long span = T + spec.pad_left + spec.pad_right - d * (K - 1) - 1;
  require(span >= 0, "conv1d: input of length " + std::to_string(T) + " too short");
  const long tout = span / s + 1;
  const long opg = cout / groups;

  Tensor y = Tensor::matrix(static_cast<std::size_t>(cout), static_cast<std::size_t>(tout));
  for (long o = 0; o < cout; ++o) {
    float* yr = y.row(static_cast<std::size_t>(o));
    if (bias) std::fill(yr, yr + tout, bias->value[static_cast<std::size_t>(o)]);
    const long g = o / opg;
    for (long cl = 0; cl < cg; ++cl) {
      const float* xr = xv.row(static_cast<std::size_t>(g * cg + cl));
      const float* wr = wv.data() + (o * cg + cl) * K;
      for (long k = 0; k < K; ++k) {
        const float w = wr[k];
        const long off = k * d - pl;
        const auto [lo, hi] = valid_range(off, s, T, tout);
        if (s == 1) {
          for (long t = lo; t < hi; ++t) yr[t] += w * xr[t + off];
        } else {
          for (long t = lo; t < hi; ++t) yr[t] += w * xr[t * s + off];
        }
      }
    }
  }

  return make_op(std::move(y), {x, weight, bias}, [cout, cg, K, s, d, pl, T, tout, opg](Node& self) {
    const Tensor& dy = self.grad;
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    const Tensor& xval = xn.value;
    const Tensor& wval = wn.value;
    Tensor* dx = xn.requires_grad ? &xn.grad_buffer() : nullptr;
    Tensor* dw = wn.requires_grad ? &wn.grad_buffer() : nullptr;
    if (self.inputs[2] && self.inputs[2]->requires_grad) {
      Tensor& db = self.inputs[2]->grad_buffer();
      for (long o = 0; o < cout; ++o) {
        const float* g = dy.row(static_cast<std::size_t>(o));
        double acc = 0.0;
        for (long t = 0; t < tout; ++t) acc += g[t];
        db[static_cast<std::size_t>(o)] += static_cast<float>(acc);
      }
    }
    for (long o = 0; o < cout; ++o) {
      const float* g = dy.row(static_cast<std::size_t>(o));
      const long grp = o / opg;
      for (long cl = 0; cl < cg; ++cl) {
        const long ci = grp * cg + cl;
        const float* xr = xval.row(static_cast<std::size_t>(ci));
        const float* wr = wval.data() + (o * cg + cl) * K;
        for (long k = 0; k < K; ++k) {
          const long off = k * d - pl;
          const auto [lo, hi] = valid_range(off, s, T, tout);
          if (dx) {
            float* dxr = dx->row(static_cast<std::size_t>(ci));
            const float w = wr[k];
            if (s == 1) {
              for (long t = lo; t < hi; ++t) dxr[t + off] += w * g[t];
            } else {
              for (long t = lo; t < hi; ++t) dxr[t * s + off] += w * g[t];
            }
          }
          if (dw) {
            float acc = 0.0f;
            if (s == 1) {
              for (long t = lo; t < hi; ++t) acc += g[t] * xr[t + off];
            } else {
              for (long t = lo; t < hi; ++t) acc += g[t] * xr[t * s + off];
            }
            (*dw)[static_cast<std::size_t>((o * cg + cl) * K + k)] += acc;
          }
        }
      }
    }
  });
}

Var conv_transpose1d(const Var& x, const Var& weight, const Var& bias, int stride,
                     int crop_left, int crop_right) {
  const Tensor& xv = x->value;
  const Tensor& wv = weight->value;
  require(xv.rank() == 2 && wv.rank() == 3, "conv_transpose1d: expected 2-D input, 3-D weight");
  const long cin = static_cast<long>(xv.dim(0));
  const long T = static_cast<long>(xv.dim(1));
  require(static_cast<long>(wv.dim(0)) == cin, "conv_transpose1d: channel mismatch");
  const long cout = static_cast<long>(wv.dim(1));
  const long K = static_cast<long>(wv.dim(2));
  const long s = stride, cl = crop_left;
  const long tout = (T - 1) * s + K - crop_left - crop_right;
  require(T >= 1 && tout >= 1, "conv_transpose1d: empty output");
  require(!bias || bias->value.size() == static_cast<std::size_t>(cout),
          "conv_transpose1d: bias size");

  Tensor y = Tensor::matrix(static_cast<std::size_t>(cout), static_cast<std::size_t>(tout));
  if (bias)
    for (long o = 0; o < cout; ++o) {
      float* yr = y.row(static_cast<std::size_t>(o));
      std::fill(yr, yr + tout, bias->value[static_cast<std::size_t>(o)]);
    }
  // y[o][t * s + k - cl] += w[ci][o][k] * x[ci][t]
  for (long ci = 0; ci < cin; ++ci) {
    const float* xr = xv.row(static_cast<std::size_t>(ci));
    for (long o = 0; o < cout; ++o) {
      float* yr = y.row(static_cast<std::size_t>(o));
      const float* wr = wv.data() + (ci * cout + o) * K;
      for (long k = 0; k < K; ++k) {
        const float w = wr[k];
        const long off = k - cl;
        const auto [lo, hi] = valid_range(off, s, tout, T);
        for (long t = lo; t < hi; ++t) yr[t * s + off] += w * xr[t];
      }
    }
  }

  return make_op(std::move(y), {x, weight, bias}, [cin, cout, K, s, cl, T, tout](Node& self) {
    const Tensor& dy = self.grad;
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    Tensor* dx = xn.requires_grad ? &xn.grad_buffer() : nullptr;
    Tensor* dw = wn.requires_grad ? &wn.grad_buffer() : nullptr;
    if (self.inputs[2] && self.inputs[2]->requires_grad) {
      Tensor& db = self.inputs[2]->grad_buffer();
      for (long o = 0; o < cout; ++o) {
        const float* g = dy.row(static_cast<std::size_t>(o));
        double acc = 0.0;
        for (long t = 0; t < tout; ++t) acc += g[t];
        db[static_cast<std::size_t>(o)] += static_cast<float>(acc);
      }
    }
    for (long ci = 0; ci < cin; ++ci) {
      const float* xr = xn.value.row(static_cast<std::size_t>(ci));
      float* dxr = dx ? dx->row(static_cast<std::size_t>(ci)) : nullptr;
      for (long o = 0; o < cout; ++o) {
        const float* g = dy.row(static_cast<std::size_t>(o));
        const float* wr = wn.value.data() + (ci * cout + o) * K;
        for (long k = 0; k < K; ++k) {
          const long off = k - cl;
          const auto [lo, hi] = valid_range(off, s, tout, T);
          if (dxr) {
            const float w = wr[k];
            for (long t = lo; t < hi; ++t) dxr[t] += w * g[t * s + off];
          }
          if (dw) {
            float acc = 0.0f;
            for (long t = lo; t < hi; ++t) acc += xr[t] * g[t * s + off];
            (*dw)[static_cast<std::size_t>((ci * cout + o) * K + k)] += acc;
          }
        }
      }
    }
  });
}

Var leaky_relu(const Var& x, float slope) {
  Tensor y = x->value;
  for (auto& v : y.values())
    if (v < 0.0f) v *= slope;
  return make_op(std::move(y), {x}, [slope](Node& self) {
    Node& xn = *self.inputs[0];
    Tensor& dx = xn.grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i)
      dx[i] += xn.value[i] < 0.0f ? slope * self.grad[i] : self.grad[i];
  });
}

Var tanh(const Var& x) {
  Tensor y = x->value;
  for (auto& v : y.values()) v = std::tanh(v);
  return make_op(std::move(y), {x}, [](Node& self) {
    Tensor& dx = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i)
      dx[i] += self.grad[i] * (1.0f - self.value[i] * self.value[i]);
  });
}

Var add(const Var& a, const Var& b) {
  require(a->value.same_shape(b->value), "add: shape mismatch " + a->value.shape_string() +
                                             " vs " + b->value.shape_string());
  Tensor y = a->value;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b->value[i];
  return make_op(std::move(y), {a, b}, [](Node& self) {
    for (int j = 0; j < 2; ++j) {
      Node& in = *self.inputs[static_cast<std::size_t>(j)];
      if (!in.requires_grad) continue;
      Tensor& g = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var film(const Var& u, const Var& gamma_a, const Var& shift_a, const Var& gamma_b,
         const Var& shift_b) {
  const Tensor& uv = u->value;
  for (const Var* v : {&gamma_a, &shift_a, &gamma_b, &shift_b})
    require((*v)->value.same_shape(uv), "film: shape mismatch " + (*v)->value.shape_string() +
                                            " vs hidden " + uv.shape_string());
  Tensor y = Tensor(uv.shape());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = (gamma_a->value[i] + gamma_b->value[i]) * uv[i] + shift_a->value[i] +
           shift_b->value[i];
  return make_op(std::move(y), {u, gamma_a, shift_a, gamma_b, shift_b}, [](Node& self) {
    Node& un = *self.inputs[0];
    Node& ga = *self.inputs[1];
    Node& gb = *self.inputs[3];
    const Tensor& g = self.grad;
    if (un.requires_grad) {
      Tensor& du = un.grad_buffer();
      for (std::size_t i = 0; i < du.size(); ++i)
        du[i] += (ga.value[i] + gb.value[i]) * g[i];
    }
    for (std::size_t j : {1u, 3u}) {
      Node& gn = *self.inputs[j];
      if (!gn.requires_grad) continue;
      Tensor& dg = gn.grad_buffer();
      for (std::size_t i = 0; i < dg.size(); ++i) dg[i] += un.value[i] * g[i];
    }
    for (std::size_t j : {2u, 4u}) {
      Node& sn = *self.inputs[j];
      if (!sn.requires_grad) continue;
      Tensor& ds = sn.grad_buffer();
      for (std::size_t i = 0; i < ds.size(); ++i) ds[i] += g[i];
    }
  });
}

Var time_mean(const Var& x) {
  const Tensor& xv = x->value;
  require(xv.rank() == 2 && xv.dim(1) >= 1, "time_mean: expected C x T with T >= 1");
  const std::size_t C = xv.dim(0), T = xv.dim(1);
  Tensor mu = Tensor::matrix(C, 1);
  for (std::size_t c = 0; c < C; ++c) {
    const float* r = xv.row(c);
    double acc = 0.0;
    for (std::size_t t = 0; t < T; ++t) acc += r[t];
    mu[c] = static_cast<float>(acc / static_cast<double>(T));
  }
  return make_op(std::move(mu), {x}, [C, T](Node& self) {
    Tensor& dx = self.inputs[0]->grad_buffer();
    const float inv = 1.0f / static_cast<float>(T);
    for (std::size_t c = 0; c < C; ++c) {
      const float g = self.grad[c] * inv;
      float* r = dx.row(c);
      for (std::size_t t = 0; t < T; ++t) r[t] += g;
    }
  });
}

namespace {

Var column_op(const Var& x, const Var& column, float sign) {
  const Tensor& xv = x->value;
  require(xv.rank() == 2 && column->value.size() == xv.dim(0),
          "column broadcast: expected C x 1 column for " + xv.shape_string());
  const std::size_t C = xv.dim(0), T = xv.dim(1);
  Tensor y = xv;
  for (std::size_t c = 0; c < C; ++c) {
    const float v = sign * column->value[c];
    float* r = y.row(c);
    for (std::size_t t = 0; t < T; ++t) r[t] += v;
  }
  return make_op(std::move(y), {x, column}, [C, T, sign](Node& self) {
    Node& xn = *self.inputs[0];
    Node& cn = *self.inputs[1];
    if (xn.requires_grad) {
      Tensor& dx = xn.grad_buffer();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
    }
    if (cn.requires_grad) {
      Tensor& dc = cn.grad_buffer();
      for (std::size_t c = 0; c < C; ++c) {
        const float* g = self.grad.row(c);
        double acc = 0.0;
        for (std::size_t t = 0; t < T; ++t) acc += g[t];
        dc[c] += sign * static_cast<float>(acc);
      }
    }
  });
}

}  // namespace

Var add_column(const Var& x, const Var& column) { return column_op(x, column, 1.0f); }
Var sub_column(const Var& x, const Var& column) { return column_op(x, column, -1.0f); }

Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x->value;
  require(xv.rank() == 2 && begin < end && end <= xv.dim(0), "slice_rows: bad range");
  const std::size_t T = xv.dim(1);
  Tensor y = Tensor::matrix(end - begin, T);
  std::copy(xv.row(begin), xv.row(begin) + (end - begin) * T, y.data());
  return make_op(std::move(y), {x}, [begin](Node& self) {
    Tensor& dx = self.inputs[0]->grad_buffer();
    float* dst = dx.row(begin);
    for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
  });
}

Var transpose(const Var& x) {
  const Tensor& xv = x->value;
  require(xv.rank() == 2, "transpose: expected 2-D");
  const std::size_t R = xv.dim(0), C = xv.dim(1);
  Tensor y = Tensor::matrix(C, R);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) y.at(c, r) = xv.at(r, c);
  return make_op(std::move(y), {x}, [R, C](Node& self) {
    Tensor& dx = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) dx.at(r, c) += self.grad.at(c, r);
  });
}

Var avg_pool(const Var& x, int factor) {
  const Tensor& xv = x->value;
  require(xv.rank() == 2 && factor >= 1, "avg_pool: expected 2-D input and factor >= 1");
  const std::size_t C = xv.dim(0), T = xv.dim(1), f = static_cast<std::size_t>(factor);
  const std::size_t tout = T / f;
  require(tout >= 1, "avg_pool: input shorter than pooling factor");
  Tensor y = Tensor::matrix(C, tout);
  const float inv = 1.0f / static_cast<float>(f);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < tout; ++t) {
      float acc = 0.0f;
      for (std::size_t j = 0; j < f; ++j) acc += xv.at(c, t * f + j);
      y.at(c, t) = acc * inv;
    }
  return make_op(std::move(y), {x}, [C, tout, f, inv](Node& self) {
    Tensor& dx = self.inputs[0]->grad_buffer();
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < tout; ++t) {
        const float g = self.grad.at(c, t) * inv;
        for (std::size_t j = 0; j < f; ++j) dx.at(c, t * f + j) += g;
      }
  });
}

}  // namespace hsvc::nn
