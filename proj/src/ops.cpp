// SPDX-License-Identifier: Apache-2.0
#include "ecgcloud/ops.hpp"

#include <algorithm>
#include <cmath>

namespace ecgcloud::nn {

namespace {

struct ConvGeometry {
  std::size_t batch, c_in, c_out, length, taps, pad, stride, out_length;
  bool batched;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                           std::size_t stride) {
  if (input.rank() != 2 && input.rank() != 3) {
    throw ShapeError("conv1d input must be [C x L] or [N x C x L], got " +
                     shape_string(input.shape()));
  }
  if (kernel.rank() != 3) throw ShapeError("conv1d kernel must be [C_out x C_in x K]");
  if (stride == 0) throw ShapeError("conv1d stride must be positive");
  ConvGeometry g{};
  g.batched = input.rank() == 3;
  g.batch = g.batched ? input.dim(0) : 1;
  g.c_in = input.dim(input.rank() - 2);
  g.length = input.dim(input.rank() - 1);
  g.c_out = kernel.dim(0);
  g.taps = kernel.dim(2);
  if (kernel.dim(1) != g.c_in) {
    throw ShapeError("conv1d kernel expects " + std::to_string(kernel.dim(1)) +
                     " input channels, input has " + std::to_string(g.c_in));
  }
  if (g.taps % 2 == 0) throw ShapeError("conv1d kernel size must be odd");
  if (bias.rank() != 1 || bias.dim(0) != g.c_out) {
    throw ShapeError("conv1d bias must be [C_out]");
  }
  g.pad = (g.taps - 1) / 2;
  g.stride = stride;
  g.out_length = (g.length + stride - 1) / stride;
  return g;
}

Shape conv_output_shape(const ConvGeometry& g) {
  return g.batched ? Shape{g.batch, g.c_out, g.out_length} : Shape{g.c_out, g.out_length};
}

// Range [lo, hi) of output positions t whose tap t*stride + offset lands
// inside the unpadded input.
std::pair<std::size_t, std::size_t> valid_range(const ConvGeometry& g, std::ptrdiff_t offset) {
  const auto s = static_cast<std::ptrdiff_t>(g.stride);
  const auto len = static_cast<std::ptrdiff_t>(g.length);
  const std::ptrdiff_t lo = offset >= 0 ? 0 : (-offset + s - 1) / s;
  if (offset > len - 1) return {0, 0};
  const std::ptrdiff_t hi =
      std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(g.out_length), (len - 1 - offset) / s + 1);
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

void conv_forward(const ConvGeometry& g, const double* x, const double* w, const double* b,
                  double* y) {
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < g.c_out; ++o) {
      double* out = y + (n * g.c_out + o) * g.out_length;
      std::fill(out, out + g.out_length, b[o]);
      for (std::size_t i = 0; i < g.c_in; ++i) {
        const double* in = x + (n * g.c_in + i) * g.length;
        const double* wk = w + (o * g.c_in + i) * g.taps;
        for (std::size_t k = 0; k < g.taps; ++k) {
          const double wv = wk[k];
          const auto offset = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(g.pad);
          const auto [lo, hi] = valid_range(g, offset);
          if (g.stride == 1) {
            const double* src = in + static_cast<std::ptrdiff_t>(lo) + offset;
            double* dst = out + lo;
            for (std::size_t j = 0; j < hi - lo; ++j) dst[j] += wv * src[j];
          } else {
            for (std::size_t t = lo; t < hi; ++t) {
              out[t] += wv * in[static_cast<std::ptrdiff_t>(t * g.stride) + offset];
            }
          }
        }
      }
    }
  }
}

void conv_backward(const ConvGeometry& g, const double* x, const double* w, const double* dy,
                   double* dx, double* dw, double* db) {
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < g.c_out; ++o) {
      const double* gout = dy + (n * g.c_out + o) * g.out_length;
      if (db != nullptr) {
        double acc = 0.0;
        for (std::size_t t = 0; t < g.out_length; ++t) acc += gout[t];
        db[o] += acc;
      }
      for (std::size_t i = 0; i < g.c_in; ++i) {
        const double* in = x + (n * g.c_in + i) * g.length;
        double* gin = dx != nullptr ? dx + (n * g.c_in + i) * g.length : nullptr;
        const double* wk = w + (o * g.c_in + i) * g.taps;
        double* gwk = dw != nullptr ? dw + (o * g.c_in + i) * g.taps : nullptr;
        for (std::size_t k = 0; k < g.taps; ++k) {
          const auto offset = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(g.pad);
          const auto [lo, hi] = valid_range(g, offset);
          if (gwk != nullptr) {
            double acc = 0.0;
            for (std::size_t t = lo; t < hi; ++t) {
              acc += gout[t] * in[static_cast<std::ptrdiff_t>(t * g.stride) + offset];
            }
            gwk[k] += acc;
          }
          if (gin != nullptr) {
            const double wv = wk[k];
            for (std::size_t t = lo; t < hi; ++t) {
              gin[static_cast<std::ptrdiff_t>(t * g.stride) + offset] += wv * gout[t];
            }
          }
        }
      }
    }
  }
}

void check_dense(const Tensor& input, const Tensor& weight) {
  if (weight.rank() != 2 || input.rank() != 1 || weight.dim(1) != input.dim(0)) {
    throw ShapeError("dense expects weight [M x N] and input [N], got " +
                     shape_string(weight.shape()) + " and " + shape_string(input.shape()));
  }
}

Tensor matvec_kernel(const Tensor& weight, const Tensor& input) {
  check_dense(input, weight);
  const std::size_t m = weight.dim(0);
  const std::size_t n = weight.dim(1);
  Tensor out({m});
  for (std::size_t r = 0; r < m; ++r) {
    double acc = 0.0;
    const double* wr = weight.data().data() + r * n;
    for (std::size_t c = 0; c < n; ++c) acc += wr[c] * input[c];
    out[r] = acc;
  }
  return out;
}

double apply(Activation kind, double v) {
  switch (kind) {
    case Activation::Relu: return v > 0.0 ? v : 0.0;
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-v));
    case Activation::Tanh: return std::tanh(v);
  }
  return v;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + " needs equal shapes, got " + shape_string(a.shape()) +
                     " and " + shape_string(b.shape()));
  }
}

bool any_needs(const Tape& tape, std::initializer_list<Var> vars) {
  return std::any_of(vars.begin(), vars.end(), [&](Var v) { return tape.needs_grad(v.id); });
}

void accumulate(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride) {
  const auto g = conv_geometry(input, kernel, bias, stride);
  Tensor out(conv_output_shape(g));
  conv_forward(g, input.data().data(), kernel.data().data(), bias.data().data(),
               out.data().data());
  return out;
}

Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  Tensor out = matvec_kernel(weight, input);
  if (bias.rank() != 1 || bias.dim(0) != out.dim(0)) throw ShapeError("dense bias must be [M]");
  for (std::size_t r = 0; r < out.size(); ++r) out[r] += bias[r];
  return out;
}

Tensor activation(const Tensor& x, Activation kind) {
  Tensor out = x;
  for (double& v : out.values()) v = apply(kind, v);
  return out;
}

Tensor gru_layer(std::span<const Tensor> inputs, const GruWeights& w, const Tensor& h0) {
  Tape tape(false);
  std::vector<Var> xs;
  xs.reserve(inputs.size());
  for (const Tensor& t : inputs) xs.push_back(tape.constant_ref(t));
  const op::GruVars vars{tape.constant_ref(w.w_update), tape.constant_ref(w.u_update),
                         tape.constant_ref(w.b_update), tape.constant_ref(w.w_reset),
                         tape.constant_ref(w.u_reset),  tape.constant_ref(w.b_reset),
                         tape.constant_ref(w.w_cand),   tape.constant_ref(w.u_cand),
                         tape.constant_ref(w.b_cand)};
  return tape.value(op::gru_layer(tape, xs, vars, tape.constant_ref(h0)));
}

namespace op {

Var conv1d(Tape& tape, Var input, Var kernel, Var bias, std::size_t stride) {
  const Tensor& x = tape.value(input);
  const auto g = conv_geometry(x, tape.value(kernel), tape.value(bias), stride);
  Tensor out(conv_output_shape(g));
  conv_forward(g, x.data().data(), tape.value(kernel).data().data(),
               tape.value(bias).data().data(), out.data().data());
  return tape.push(std::move(out), any_needs(tape, {input, kernel, bias}),
                   [=](Tape& t, std::size_t self) {
                     double* dx = t.needs_grad(input.id) ? t.grad_of(input.id).data().data() : nullptr;
                     double* dw = t.needs_grad(kernel.id) ? t.grad_of(kernel.id).data().data() : nullptr;
                     double* db = t.needs_grad(bias.id) ? t.grad_of(bias.id).data().data() : nullptr;
                     conv_backward(g, t.value_of(input.id).data().data(),
                                   t.value_of(kernel.id).data().data(),
                                   t.grad_of(self).data().data(), dx, dw, db);
                   });
}

Var matvec(Tape& tape, Var weight, Var input) {
  Tensor out = matvec_kernel(tape.value(weight), tape.value(input));
  return tape.push(std::move(out), any_needs(tape, {weight, input}),
                   [=](Tape& t, std::size_t self) {
                     const Tensor& w = t.value_of(weight.id);
                     const Tensor& x = t.value_of(input.id);
                     const Tensor& dy = t.grad_of(self);
                     const std::size_t m = w.dim(0);
                     const std::size_t n = w.dim(1);
                     if (t.needs_grad(weight.id)) {
                       Tensor& dw = t.grad_of(weight.id);
                       for (std::size_t r = 0; r < m; ++r) {
                         for (std::size_t c = 0; c < n; ++c) dw[r * n + c] += dy[r] * x[c];
                       }
                     }
                     if (t.needs_grad(input.id)) {
                       Tensor& dx = t.grad_of(input.id);
                       for (std::size_t r = 0; r < m; ++r) {
                         for (std::size_t c = 0; c < n; ++c) dx[c] += w[r * n + c] * dy[r];
                       }
                     }
                   });
}

Var dense(Tape& tape, Var input, Var weight, Var bias) {
  return add(tape, matvec(tape, weight, input), bias);
}

Var activation(Tape& tape, Var x, Activation kind) {
  Tensor out = nn::activation(tape.value(x), kind);
  return tape.push(std::move(out), tape.needs_grad(x.id), [=](Tape& t, std::size_t self) {
    const Tensor& in = t.value_of(x.id);
    const Tensor& y = t.value_of(self);
    const Tensor& dy = t.grad_of(self);
    Tensor& dx = t.grad_of(x.id);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      switch (kind) {
        case Activation::Relu: dx[i] += in[i] > 0.0 ? dy[i] : 0.0; break;
        case Activation::Sigmoid: dx[i] += dy[i] * y[i] * (1.0 - y[i]); break;
        case Activation::Tanh: dx[i] += dy[i] * (1.0 - y[i] * y[i]); break;
      }
    }
  });
}

Var add(Tape& tape, Var a, Var b) {
  require_same_shape(tape.value(a), tape.value(b), "add");
  Tensor out = tape.value(a);
  accumulate(out, tape.value(b));
  return tape.push(std::move(out), any_needs(tape, {a, b}), [=](Tape& t, std::size_t self) {
    if (t.needs_grad(a.id)) accumulate(t.grad_of(a.id), t.grad_of(self));
    if (t.needs_grad(b.id)) accumulate(t.grad_of(b.id), t.grad_of(self));
  });
}

Var sub(Tape& tape, Var a, Var b) {
  require_same_shape(tape.value(a), tape.value(b), "sub");
  Tensor out = tape.value(a);
  const Tensor& bv = tape.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return tape.push(std::move(out), any_needs(tape, {a, b}), [=](Tape& t, std::size_t self) {
    const Tensor& dy = t.grad_of(self);
    if (t.needs_grad(a.id)) accumulate(t.grad_of(a.id), dy);
    if (t.needs_grad(b.id)) {
      Tensor& db = t.grad_of(b.id);
      for (std::size_t i = 0; i < db.size(); ++i) db[i] -= dy[i];
    }
  });
}

Var mul(Tape& tape, Var a, Var b) {
  require_same_shape(tape.value(a), tape.value(b), "mul");
  Tensor out = tape.value(a);
  const Tensor& bv = tape.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return tape.push(std::move(out), any_needs(tape, {a, b}), [=](Tape& t, std::size_t self) {
    const Tensor& dy = t.grad_of(self);
    const Tensor& av = t.value_of(a.id);
    const Tensor& bw = t.value_of(b.id);
    if (t.needs_grad(a.id)) {
      Tensor& da = t.grad_of(a.id);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i] * bw[i];
    }
    if (t.needs_grad(b.id)) {
      Tensor& db = t.grad_of(b.id);
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[i] * av[i];
    }
  });
}

Var sum(Tape& tape, Var x) {
  double acc = 0.0;
  for (double v : tape.value(x).data()) acc += v;
  return tape.push(Tensor::scalar(acc), tape.needs_grad(x.id), [=](Tape& t, std::size_t self) {
    const double g = t.grad_of(self)[0];
    for (double& v : t.grad_of(x.id).values()) v += g;
  });
}

Var scale(Tape& tape, Var x, double factor) {
  Tensor out = tape.value(x);
  for (double& v : out.values()) v *= factor;
  return tape.push(std::move(out), tape.needs_grad(x.id), [=](Tape& t, std::size_t self) {
    const Tensor& dy = t.grad_of(self);
    Tensor& dx = t.grad_of(x.id);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += factor * dy[i];
  });
}

Var mean_last_axis(Tape& tape, Var x) {
  const Tensor& in = tape.value(x);
  if (in.rank() != 3) throw ShapeError("mean_last_axis expects [N x C x L]");
  const std::size_t rows = in.dim(0) * in.dim(1);
  const std::size_t len = in.dim(2);
  Tensor out({in.dim(0), in.dim(1)});
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t l = 0; l < len; ++l) acc += in[r * len + l];
    out[r] = acc / static_cast<double>(len);
  }
  return tape.push(std::move(out), tape.needs_grad(x.id), [=](Tape& t, std::size_t self) {
    const Tensor& dy = t.grad_of(self);
    Tensor& dx = t.grad_of(x.id);
    const double inv = 1.0 / static_cast<double>(len);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t l = 0; l < len; ++l) dx[r * len + l] += dy[r] * inv;
    }
  });
}

Var row(Tape& tape, Var x, std::size_t i) {
  const Tensor& in = tape.value(x);
  if (in.rank() != 2 || i >= in.dim(0)) throw ShapeError("row index out of range");
  const std::size_t width = in.dim(1);
  const auto first = in.values().begin() + static_cast<std::ptrdiff_t>(i * width);
  Tensor out({width}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(width)));
  return tape.push(std::move(out), tape.needs_grad(x.id), [=](Tape& t, std::size_t self) {
    const Tensor& dy = t.grad_of(self);
    Tensor& dx = t.grad_of(x.id);
    for (std::size_t c = 0; c < width; ++c) dx[i * width + c] += dy[c];
  });
}

Var gru_layer(Tape& tape, std::span<const Var> inputs, const GruVars& w, Var h0) {
  if (inputs.empty()) throw Error("EMPTY_SEQUENCE", "GRU needs at least one input step");
  const std::size_t width = tape.value(inputs.front()).size();
  Var h = h0;
  for (Var x : inputs) {
    if (tape.value(x).size() != width) throw ShapeError("GRU inputs differ in dimension");
    const Var z = sigmoid(tape, add(tape, add(tape, matvec(tape, w.w_update, x),
                                               matvec(tape, w.u_update, h)), w.b_update));
    const Var r = sigmoid(tape, add(tape, add(tape, matvec(tape, w.w_reset, x),
                                               matvec(tape, w.u_reset, h)), w.b_reset));
    const Var cand = tanh(tape, add(tape, add(tape, matvec(tape, w.w_cand, x),
                                               matvec(tape, w.u_cand, mul(tape, r, h))),
                                    w.b_cand));
    h = add(tape, h, mul(tape, z, sub(tape, cand, h)));
  }
  return h;
}

}  // namespace op

}  // namespace ecgcloud::nn
