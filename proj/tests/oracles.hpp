// SPDX-License-Identifier: Apache-2.0
//
// Reference implementations for the tests, written from the definitions
// with plain loops over std::vector. Nothing here calls library kernels;
// the library types below are only read as data containers.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ecgcloud/bundle.hpp"
#include "ecgcloud/tensor.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // [row][col]

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

/// x[c][t], w[o][c][k]. Pads explicitly, then evaluates the sum term by term.
inline Mat conv1d(const Mat& x, const std::vector<Mat>& w, const Vec& b, std::size_t stride) {
  const std::size_t channels = x.size();
  const std::size_t length = x[0].size();
  const std::size_t taps = w[0][0].size();
  const std::size_t pad = (taps - 1) / 2;
  Mat padded(channels, Vec(length + 2 * pad, 0.0));
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < length; ++t) padded[c][t + pad] = x[c][t];
  }
  const std::size_t out_len = (length + stride - 1) / stride;
  Mat y(w.size(), Vec(out_len, 0.0));
  for (std::size_t o = 0; o < w.size(); ++o) {
    for (std::size_t t = 0; t < out_len; ++t) {
      double acc = b[o];
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t k = 0; k < taps; ++k) acc += w[o][c][k] * padded[c][t * stride + k];
      }
      y[o][t] = acc;
    }
  }
  return y;
}

inline Vec dense(const Mat& w, const Vec& x, const Vec& b) {
  Vec y(w.size());
  for (std::size_t r = 0; r < w.size(); ++r) {
    double acc = b[r];
    for (std::size_t c = 0; c < x.size(); ++c) acc += w[r][c] * x[c];
    y[r] = acc;
  }
  return y;
}

struct Gru {
  Mat wz, uz, wr, ur, wh, uh;
  Vec bz, br, bh;
};

/// z = s(Wz x + Uz h + bz), r = s(Wr x + Ur h + br),
/// c = tanh(Wh x + Uh (r*h) + bh), h' = (1 - z) h + z c.
inline Vec gru_step(const Gru& g, const Vec& x, const Vec& h) {
  const std::size_t n = h.size();
  Vec z = dense(g.wz, x, g.bz);
  Vec r = dense(g.wr, x, g.br);
  const Vec uz = dense(g.uz, h, Vec(n, 0.0));
  const Vec ur = dense(g.ur, h, Vec(n, 0.0));
  Vec rh(n);
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = sigmoid(z[i] + uz[i]);
    r[i] = sigmoid(r[i] + ur[i]);
    rh[i] = r[i] * h[i];
  }
  Vec c = dense(g.wh, x, g.bh);
  const Vec uh = dense(g.uh, rh, Vec(n, 0.0));
  Vec out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (1.0 - z[i]) * h[i] + z[i] * std::tanh(c[i] + uh[i]);
  return out;
}

inline Mat as_matrix(const ecgcloud::nn::Tensor& t) {
  Mat m(t.dim(0), Vec(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.values()[i * t.dim(1) + j];
  }
  return m;
}

inline std::vector<Mat> as_kernel(const ecgcloud::nn::Tensor& t) {
  std::vector<Mat> k(t.dim(0), Mat(t.dim(1), Vec(t.dim(2))));
  std::size_t idx = 0;
  for (auto& plane : k) {
    for (auto& row : plane) {
      for (double& v : row) v = t.values()[idx++];
    }
  }
  return k;
}

/// Whole network written out as one straight sequence of loops: residual
/// trunk (pre-activation, raw input into layer 1, projection when the
/// channel count or length changes), ReLU + time average, GRU from a zero
/// state, optional ReLU hidden layer, sigmoid outputs. Block layout and
/// strides are recomputed here from the config fields.
inline Vec network_forward(const ecgcloud::nn::WeightBundle& bundle, const std::vector<Mat>& segments) {
  const auto& c = bundle.config;
  const auto& p = bundle.tensors;
  auto name = [](const char* fmt, std::size_t i, const char* what) {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, i, what);
    return std::string(buf);
  };
  std::vector<Vec> embeddings;
  for (const Mat& seg : segments) {
    Mat h = seg;
    for (std::size_t first = 1, block = 0; first <= c.conv_layers; first += c.shortcut_every, ++block) {
      const Mat input = h;
      std::size_t total_stride = 1;
      for (std::size_t layer = first; layer < first + c.shortcut_every; ++layer) {
        if (layer != 1) {
          for (auto& row : h) {
            for (double& v : row) v = std::max(0.0, v);
          }
        }
        const std::size_t stride = layer % c.downsample_every == 0 ? 2 : 1;
        total_stride *= stride;
        const auto w = as_kernel(p.at(name("trunk.conv%02zu.%s", layer, "weight")));
        h = conv1d(h, w, p.at(name("trunk.conv%02zu.%s", layer, "bias")).values(), stride);
      }
      Mat shortcut = input;
      if (input.size() != h.size() || total_stride != 1) {
        const auto w = as_kernel(p.at(name("trunk.block%02zu.proj.%s", block, "weight")));
        shortcut = conv1d(input, w, p.at(name("trunk.block%02zu.proj.%s", block, "bias")).values(), total_stride);
      }
      for (std::size_t i = 0; i < h.size(); ++i) {
        for (std::size_t t = 0; t < h[i].size(); ++t) h[i][t] += shortcut[i][t];
      }
    }
    Vec e(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
      double acc = 0.0;
      for (double v : h[i]) acc += std::max(0.0, v);
      e[i] = acc / static_cast<double>(h[i].size());
    }
    embeddings.push_back(e);
  }
  Gru g{as_matrix(p.at("rnn.w_update")), as_matrix(p.at("rnn.u_update")), as_matrix(p.at("rnn.w_reset")),
        as_matrix(p.at("rnn.u_reset")),  as_matrix(p.at("rnn.w_cand")),   as_matrix(p.at("rnn.u_cand")),
        p.at("rnn.b_update").values(),   p.at("rnn.b_reset").values(),    p.at("rnn.b_cand").values()};
  Vec state(c.rnn_hidden, 0.0);
  for (const Vec& e : embeddings) state = gru_step(g, e, state);
  if (c.head_hidden > 0) {
    state = dense(as_matrix(p.at("head.hidden.weight")), state, p.at("head.hidden.bias").values());
    for (double& v : state) v = std::max(0.0, v);
  }
  Vec out = dense(as_matrix(p.at("head.out.weight")), state, p.at("head.out.bias").values());
  for (double& v : out) v = sigmoid(v);
  return out;
}

/// P(pos > neg) + P(tie) / 2 over every positive/negative pair.
inline double pair_count_auc(std::span<const double> scores, std::span<const int> labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

/// Smallest sample v such that at least pct percent of the samples are <= v.
inline double percentile_by_sort(std::vector<double> xs, double pct) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (static_cast<double>(i + 1) * 100.0 >= pct * n) return xs[i];
  }
  return xs.back();
}

inline double bce(double p, double y) {
  p = std::min(std::max(p, 1e-7), 1.0 - 1e-7);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

/// Amplitude of the `freq` component of x by least-squares fit of a sine
/// and cosine over samples [from, to).
inline double tone_amplitude(std::span<const double> x, double freq, double rate, std::size_t from, std::size_t to) {
  double ss = 0, cc = 0, sc = 0, xs = 0, xc = 0;
  for (std::size_t i = from; i < to; ++i) {
    const double ph = 2.0 * std::numbers::pi * freq * static_cast<double>(i) / rate;
    const double s = std::sin(ph), co = std::cos(ph);
    ss += s * s;
    cc += co * co;
    sc += s * co;
    xs += x[i] * s;
    xc += x[i] * co;
  }
  const double det = ss * cc - sc * sc;
  const double a = (xs * cc - xc * sc) / det;
  const double b = (xc * ss - xs * sc) / det;
  return std::hypot(a, b);
}

inline double decibels(double ratio) { return 20.0 * std::log10(ratio); }

/// Zero-phase (forward-backward) Butterworth band-pass magnitude at `freq`:
/// the squared magnitude of the bilinear-transformed analog prototype.
inline double butterworth_bandpass_zero_phase_gain(double freq, double rate, double hp_cut, int hp_order,
                                                   double lp_cut, int lp_order) {
  const double w = std::tan(std::numbers::pi * freq / rate);
  const double whp = std::tan(std::numbers::pi * hp_cut / rate);
  const double wlp = std::tan(std::numbers::pi * lp_cut / rate);
  const double lp = 1.0 / (1.0 + std::pow(w / wlp, 2 * lp_order));
  const double hp = 1.0 / (1.0 + std::pow(whp / w, 2 * hp_order));
  return lp * hp;
}

inline Vec random_vec(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec v(n);
  for (double& x : v) x = u(rng);
  return v;
}

}  // namespace oracle
