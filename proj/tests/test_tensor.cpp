// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstring>
#include <random>
#include <sstream>

#include "ecgcloud/autodiff.hpp"
#include "ecgcloud/bundle.hpp"
#include "ecgcloud/ops.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace ecgcloud;
using nn::Tensor;
namespace op = nn::op;

namespace {

Tensor random_tensor(std::mt19937_64& rng, nn::Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

oracle::Mat to_mat(const Tensor& t) { return oracle::as_matrix(t); }

// Bitwise CRC-32 (reflected, polynomial 0xEDB88320).
std::uint32_t crc32_bitwise(const char* data, std::size_t n) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) {
    crc ^= static_cast<unsigned char>(data[i]);
    for (int b = 0; b < 8; ++b) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

}  // namespace

TEST_CASE("tensor shape invariants") {
  CHECK_THROWS_AS(Tensor(nn::Shape{}), nn::ShapeError);
  CHECK_THROWS_AS(Tensor({2, 0}), nn::ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), nn::ShapeError);
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.all_finite());
  t[4] = std::numeric_limits<double>::infinity();
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS_AS(t.reshaped({4}), nn::ShapeError);
  CHECK(t.reshaped({3, 2}).size() == 6);
}

TEST_CASE("conv1d examples") {
  SUBCASE("identity kernel") {
    std::mt19937_64 rng(1);
    for (int rep = 0; rep < 20; ++rep) {
      const Tensor x = random_tensor(rng, {1, 3 + static_cast<std::size_t>(rep)});
      CHECK(nn::conv1d(x, Tensor({1, 1, 1}, {1.0}), Tensor({1}), 1) == x);
    }
  }
  SUBCASE("zero kernel gives the bias") {
    const Tensor x({2, 7}, std::vector<double>(14, 3.0));
    const Tensor y = nn::conv1d(x, Tensor({3, 2, 5}), Tensor({3}, {1.5, -2.0, 0.0}), 2);
    REQUIRE(y.shape() == nn::Shape{3, 4});
    for (std::size_t t = 0; t < 4; ++t) {
      CHECK(y.at(0, t) == 1.5);
      CHECK(y.at(1, t) == -2.0);
      CHECK(y.at(2, t) == 0.0);
    }
  }
  SUBCASE("2x8 input, 3x2x3 kernel, stride 2 against the naive loop") {
    std::mt19937_64 rng(7);
    const Tensor x = random_tensor(rng, {2, 8});
    const Tensor w = random_tensor(rng, {3, 2, 3});
    const Tensor b = random_tensor(rng, {3});
    const Tensor y = nn::conv1d(x, w, b, 2);
    const auto want = oracle::conv1d(to_mat(x), oracle::as_kernel(w), b.values(), 2);
    REQUIRE(y.shape() == nn::Shape{3, 4});
    for (std::size_t o = 0; o < 3; ++o) {
      for (std::size_t t = 0; t < 4; ++t) CHECK(oracle::rel_err(y.at(o, t), want[o][t]) < 1e-6);
    }
  }
  SUBCASE("channel mismatch and even kernels are rejected") {
    CHECK_THROWS_AS(nn::conv1d(Tensor({2, 5}), Tensor({1, 3, 3}), Tensor({1}), 1), nn::ShapeError);
    CHECK_THROWS_AS(nn::conv1d(Tensor({1, 5}), Tensor({1, 1, 2}), Tensor({1}), 1), nn::ShapeError);
  }
}

TEST_CASE("conv1d agrees with the naive oracle on 200 random geometries") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> channels(1, 5), length(1, 40), half_taps(0, 4), stride(1, 3),
      batch(1, 3);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = batch(rng), ci = channels(rng), co = channels(rng), len = length(rng);
    const std::size_t k = 2 * half_taps(rng) + 1, s = stride(rng);
    const Tensor x = random_tensor(rng, {n, ci, len});
    const Tensor w = random_tensor(rng, {co, ci, k});
    const Tensor b = random_tensor(rng, {co});
    const Tensor y = nn::conv1d(x, w, b, s);
    REQUIRE(y.shape() == nn::Shape{n, co, (len + s - 1) / s});
    for (std::size_t i = 0; i < n; ++i) {
      oracle::Mat xi(ci);
      for (std::size_t c = 0; c < ci; ++c) {
        for (std::size_t t = 0; t < len; ++t) xi[c].push_back(x.at(i, c, t));
      }
      const auto want = oracle::conv1d(xi, oracle::as_kernel(w), b.values(), s);
      for (std::size_t o = 0; o < co; ++o) {
        for (std::size_t t = 0; t < want[o].size(); ++t) worst = std::max(worst, oracle::rel_err(y.at(i, o, t), want[o][t]));
      }
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("dense examples") {
  const Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(nn::dense(Tensor({3}, {1, 2, 3}), eye, Tensor({3})).values() == std::vector<double>{1, 2, 3});
  CHECK(nn::dense(Tensor({3}, {7, 8, 9}), Tensor({2, 3}), Tensor({2}, {5, 6})).values() == std::vector<double>{5, 6});
  std::mt19937_64 rng(3);
  const Tensor w = random_tensor(rng, {4, 3}), x = random_tensor(rng, {3}), b = random_tensor(rng, {4});
  const auto want = oracle::dense(to_mat(w), x.values(), b.values());
  const Tensor y = nn::dense(x, w, b);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(y[i] - want[i]) < 1e-9);
  CHECK_THROWS_AS(nn::dense(Tensor({2}), w, b), nn::ShapeError);
}

TEST_CASE("activations") {
  CHECK(nn::activation(Tensor({3}, {-1, 0, 2}), nn::Activation::Relu).values() == std::vector<double>{0, 0, 2});
  CHECK(nn::activation(Tensor({1}, {0.0}), nn::Activation::Sigmoid)[0] == 0.5);
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor(rng, {50}, -5.0, 5.0);
  const Tensor y = nn::activation(x, nn::Activation::Tanh);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - std::tanh(x[i])) <= 1e-12);
  const Tensor s = nn::activation(x, nn::Activation::Sigmoid);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(s[i] > 0.0);
    CHECK(s[i] < 1.0);
    CHECK(std::abs(s[i] - oracle::sigmoid(x[i])) <= 1e-12);
  }
}

TEST_CASE("gru_layer") {
  SUBCASE("zero parameters keep a zero state") {
    nn::GruWeights w{Tensor({3, 2}), Tensor({3, 3}), Tensor({3}), Tensor({3, 2}), Tensor({3, 3}),
                     Tensor({3}),    Tensor({3, 2}), Tensor({3, 3}), Tensor({3})};
    std::vector<Tensor> xs{Tensor({2}, {1, -4}), Tensor({2}, {0.5, 9})};
    CHECK(nn::gru_layer(xs, w, Tensor({3})) == Tensor({3}));
  }
  SUBCASE("scalar case against the hand recurrence") {
    // N = H = 1 with hand-picked weights.
    nn::GruWeights w{Tensor({1, 1}, {0.5}),  Tensor({1, 1}, {-0.3}), Tensor({1}, {0.1}),
                     Tensor({1, 1}, {0.8}),  Tensor({1, 1}, {0.2}),  Tensor({1}, {-0.2}),
                     Tensor({1, 1}, {1.5}),  Tensor({1, 1}, {0.7}),  Tensor({1}, {0.05})};
    const std::vector<double> xs{0.9, -1.2, 0.4};
    double h = 0.25;
    for (double x : xs) {
      const double z = 1.0 / (1.0 + std::exp(-(0.5 * x - 0.3 * h + 0.1)));
      const double r = 1.0 / (1.0 + std::exp(-(0.8 * x + 0.2 * h - 0.2)));
      const double c = std::tanh(1.5 * x + 0.7 * (r * h) + 0.05);
      h = (1.0 - z) * h + z * c;
    }
    std::vector<Tensor> seq;
    for (double x : xs) seq.push_back(Tensor({1}, {x}));
    CHECK(std::abs(nn::gru_layer(seq, w, Tensor({1}, {0.25}))[0] - h) < 1e-9);
  }
  SUBCASE("single step is one application of the recurrence") {
    std::mt19937_64 rng(5);
    nn::GruWeights w{random_tensor(rng, {4, 3}), random_tensor(rng, {4, 4}), random_tensor(rng, {4}),
                     random_tensor(rng, {4, 3}), random_tensor(rng, {4, 4}), random_tensor(rng, {4}),
                     random_tensor(rng, {4, 3}), random_tensor(rng, {4, 4}), random_tensor(rng, {4})};
    const Tensor x = random_tensor(rng, {3}), h0 = random_tensor(rng, {4});
    const oracle::Gru g{to_mat(w.w_update), to_mat(w.u_update), to_mat(w.w_reset), to_mat(w.u_reset),
                        to_mat(w.w_cand),   to_mat(w.u_cand),   w.b_update.values(), w.b_reset.values(),
                        w.b_cand.values()};
    const auto want = oracle::gru_step(g, x.values(), h0.values());
    const Tensor got = nn::gru_layer(std::vector<Tensor>{x}, w, h0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-12);
  }
  SUBCASE("empty sequence") {
    nn::GruWeights w{Tensor({1, 1}), Tensor({1, 1}), Tensor({1}), Tensor({1, 1}), Tensor({1, 1}),
                     Tensor({1}),    Tensor({1, 1}), Tensor({1, 1}), Tensor({1})};
    CHECK_THROWS_AS(nn::gru_layer(std::vector<Tensor>{}, w, Tensor({1})), Error);
  }
}

TEST_CASE("backward basics") {
  SUBCASE("sum of identity-dense output gives all-ones input gradient") {
    nn::Parameter x(Tensor({3}, {0.3, -2.0, 5.0}));
    nn::Tape tape;
    const auto vx = tape.parameter(x);
    const auto eye = tape.constant(Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
    tape.backward(op::sum(tape, op::dense(tape, vx, eye, tape.constant(Tensor({3})))));
    CHECK(x.grad.values() == std::vector<double>{1, 1, 1});
  }
  SUBCASE("sigmoid at zero has slope one quarter") {
    nn::Parameter p(Tensor({1}, {0.0}));
    nn::Tape tape;
    tape.backward(op::sigmoid(tape, tape.parameter(p)));
    CHECK(p.grad[0] == 0.25);
  }
  SUBCASE("sum has the all-ones gradient for any shape") {
    std::mt19937_64 rng(6);
    for (const nn::Shape& shape : {nn::Shape{1}, nn::Shape{4}, nn::Shape{2, 3}, nn::Shape{2, 3, 4}}) {
      nn::Parameter p(random_tensor(rng, shape));
      nn::Tape tape;
      tape.backward(op::sum(tape, tape.parameter(p)));
      for (double g : p.grad.values()) CHECK(g == 1.0);
    }
  }
  SUBCASE("repeated backward accumulates until zero_grad") {
    nn::Parameter p(Tensor({2}, {1.0, 2.0}));
    for (int i = 0; i < 3; ++i) {
      nn::Tape tape;
      tape.backward(op::sum(tape, op::scale(tape, tape.parameter(p), 2.0)));
    }
    CHECK(p.grad.values() == std::vector<double>{6.0, 6.0});
    p.zero_grad();
    CHECK(p.grad.values() == std::vector<double>{0.0, 0.0});
    CHECK_FALSE(p.grad_ready);
  }
  SUBCASE("misuse is reported") {
    nn::Tape empty;
    CHECK_THROWS_WITH_AS(empty.backward(nn::Var{0}), doctest::Contains("before any forward"), Error);
    nn::Parameter p(Tensor({2}, {1.0, 2.0}));
    nn::Tape tape;
    const auto v = tape.parameter(p);
    try {
      tape.backward(v);
      FAIL("non-scalar root accepted");
    } catch (const Error& e) {
      CHECK(e.code() == "NON_SCALAR_ROOT");
    }
    nn::Tape frozen(false);
    const auto c = frozen.parameter(p);
    CHECK_THROWS_AS(frozen.backward(op::sum(frozen, c)), Error);
  }
}

TEST_CASE("finite-difference gradients of every composite op, 20 instances each") {
  std::mt19937_64 rng(11);
  auto check_op = [&](const char* what, auto&& build_loss, std::map<std::string, nn::Parameter>& params) {
    nn::Tape tape;
    std::map<std::string, nn::Var> vars;
    for (auto& [name, p] : params) vars[name] = tape.parameter(p);
    tape.backward(build_loss(tape, vars));
    auto eval = [&] {
      nn::Tape t(false);
      std::map<std::string, nn::Var> v;
      for (auto& [name, p] : params) v[name] = t.constant_ref(p.value);
      return t.value(build_loss(t, v))[0];
    };
    const double worst = support::worst_gradient_error(params, eval);
    INFO(what);
    CHECK(worst < 1e-4);
  };
  // Weighted sums keep the root scalar while giving every output its own slope.
  auto weigh = [](nn::Tape& t, nn::Var y, std::uint64_t seed) {
    std::mt19937_64 r(seed);
    Tensor w(t.value(y).shape());
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& v : w.values()) v = u(r);
    return op::sum(t, op::mul(t, y, t.constant(std::move(w))));
  };
  for (int rep = 0; rep < 20; ++rep) {
    const std::uint64_t s = rng();
    std::uniform_int_distribution<std::size_t> small(1, 4), len(3, 12), stride(1, 2);
    {
      const std::size_t ci = small(rng), co = small(rng), l = len(rng), k = 2 * small(rng) - 1, st = stride(rng);
      std::map<std::string, nn::Parameter> p;
      p.emplace("x", nn::Parameter(random_tensor(rng, {2, ci, l})));
      p.emplace("w", nn::Parameter(random_tensor(rng, {co, ci, k})));
      p.emplace("b", nn::Parameter(random_tensor(rng, {co})));
      check_op("conv1d", [&](nn::Tape& t, auto& v) { return weigh(t, op::conv1d(t, v["x"], v["w"], v["b"], st), s); }, p);
    }
    {
      const std::size_t m = small(rng), n = small(rng);
      std::map<std::string, nn::Parameter> p;
      p.emplace("x", nn::Parameter(random_tensor(rng, {n})));
      p.emplace("w", nn::Parameter(random_tensor(rng, {m, n})));
      p.emplace("b", nn::Parameter(random_tensor(rng, {m})));
      check_op("dense", [&](nn::Tape& t, auto& v) { return weigh(t, op::dense(t, v["x"], v["w"], v["b"]), s); }, p);
    }
    {
      std::map<std::string, nn::Parameter> p;
      p.emplace("x", nn::Parameter(random_tensor(rng, {small(rng), 5})));
      check_op("sigmoid/tanh/mean",
               [&](nn::Tape& t, auto& v) {
                 const auto a = op::sigmoid(t, v["x"]);
                 const auto b = op::tanh(t, op::scale(t, v["x"], 1.7));
                 return weigh(t, op::add(t, op::mul(t, a, b), op::sub(t, a, b)), s);
               },
               p);
    }
    {
      // Keep values away from the ReLU kink so central differences stay on one side.
      Tensor x = random_tensor(rng, {3, 2, 6});
      for (double& v : x.values()) v += v >= 0 ? 0.05 : -0.05;
      std::map<std::string, nn::Parameter> p;
      p.emplace("x", nn::Parameter(std::move(x)));
      check_op("relu/mean_last_axis/row",
               [&](nn::Tape& t, auto& v) {
                 const auto m = op::mean_last_axis(t, op::relu(t, v["x"]));
                 return weigh(t, op::add(t, op::row(t, m, 0), op::row(t, m, 2)), s);
               },
               p);
    }
    {
      const std::size_t n = small(rng), h = small(rng), steps = small(rng);
      std::map<std::string, nn::Parameter> p;
      for (const char* g : {"update", "reset", "cand"}) {
        p.emplace(std::string("w_") + g, nn::Parameter(random_tensor(rng, {h, n})));
        p.emplace(std::string("u_") + g, nn::Parameter(random_tensor(rng, {h, h})));
        p.emplace(std::string("b_") + g, nn::Parameter(random_tensor(rng, {h})));
      }
      for (std::size_t i = 0; i < steps; ++i) p.emplace("x" + std::to_string(i), nn::Parameter(random_tensor(rng, {n})));
      p.emplace("h0", nn::Parameter(random_tensor(rng, {h})));
      check_op("gru_layer",
               [&](nn::Tape& t, auto& v) {
                 std::vector<nn::Var> xs;
                 for (std::size_t i = 0; i < steps; ++i) xs.push_back(v["x" + std::to_string(i)]);
                 const op::GruVars g{v["w_update"], v["u_update"], v["b_update"], v["w_reset"], v["u_reset"],
                                     v["b_reset"],  v["w_cand"],   v["u_cand"],   v["b_cand"]};
                 return weigh(t, op::gru_layer(t, xs, g, v["h0"]), s);
               },
               p);
    }
  }
}

TEST_CASE("random 3-layer toy net: analytic gradients match finite differences") {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 5; ++rep) {
    std::map<std::string, nn::Parameter> p;
    p.emplace("c.w", nn::Parameter(random_tensor(rng, {3, 1, 3})));
    p.emplace("c.b", nn::Parameter(random_tensor(rng, {3})));
    p.emplace("d1.w", nn::Parameter(random_tensor(rng, {4, 3})));
    p.emplace("d1.b", nn::Parameter(random_tensor(rng, {4})));
    p.emplace("d2.w", nn::Parameter(random_tensor(rng, {2, 4})));
    p.emplace("d2.b", nn::Parameter(random_tensor(rng, {2})));
    const Tensor x = random_tensor(rng, {1, 1, 10});
    auto build = [&](nn::Tape& t, std::map<std::string, nn::Var>& v) {
      auto h = op::mean_last_axis(t, op::tanh(t, op::conv1d(t, t.constant_ref(x), v["c.w"], v["c.b"], 1)));
      h = op::sigmoid(t, op::dense(t, op::row(t, h, 0), v["d1.w"], v["d1.b"]));
      return op::sum(t, op::tanh(t, op::dense(t, h, v["d2.w"], v["d2.b"])));
    };
    nn::Tape tape;
    std::map<std::string, nn::Var> vars;
    for (auto& [name, prm] : p) vars[name] = tape.parameter(prm);
    tape.backward(build(tape, vars));
    auto eval = [&] {
      nn::Tape t(false);
      std::map<std::string, nn::Var> v;
      for (auto& [name, prm] : p) v[name] = t.constant_ref(prm.value);
      return t.value(build(t, v))[0];
    };
    CHECK(support::worst_gradient_error(p, eval) < 1e-4);
  }
}

TEST_CASE("weight bundle serialization") {
  model::ModelConfig cfg = model::toy_config(ecg::LeadConfiguration::SingleLead);
  SUBCASE("empty parameter map") {
    nn::WeightBundle b;
    b.config = cfg;
    CHECK(nn::deserialize_bundle(nn::serialize_bundle(b)) == b);
  }
  SUBCASE("single 2x2 tensor is bit exact") {
    nn::WeightBundle b;
    b.config = cfg;
    b.tensors.emplace("w", Tensor({2, 2}, {0.1, -0.0, 1e-300, 3.141592653589793}));
    std::stringstream ss;
    const std::size_t n = nn::save_bundle(b, ss);
    CHECK(n == ss.str().size());
    const auto back = nn::load_bundle(ss);
    REQUIRE(back.tensors.size() == 1);
    const auto& v = back.tensors.at("w").values();
    CHECK(std::memcmp(v.data(), b.tensors.at("w").values().data(), 4 * sizeof(double)) == 0);
    CHECK(std::signbit(v[1]));
    CHECK(nn::serialize_bundle(back) == nn::serialize_bundle(b));
  }
  SUBCASE("1 MB random bundle keeps a valid whole-file checksum") {
    std::mt19937_64 rng(8);
    nn::WeightBundle b;
    b.config = cfg;
    for (int i = 0; i < 4; ++i) b.tensors.emplace("t" + std::to_string(i), random_tensor(rng, {128, 256}));
    const std::string bytes = nn::serialize_bundle(b);
    CHECK(bytes.size() > 1'000'000);
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[bytes.size() - 4 + i])) << (8 * i);
    CHECK(stored == crc32_bitwise(bytes.data(), bytes.size() - 4));
    CHECK(nn::deserialize_bundle(bytes) == b);
    CHECK(nn::serialize_bundle(nn::deserialize_bundle(bytes)) == bytes);
  }
  SUBCASE("corruption is detected") {
    nn::WeightBundle b;
    b.config = cfg;
    b.tensors.emplace("w", Tensor({3}, {1.0, 2.0, 3.0}));
    const std::string bytes = nn::serialize_bundle(b);
    auto code_of = [](const std::string& data) -> std::string {
      try {
        nn::deserialize_bundle(data);
      } catch (const nn::BundleError& e) {
        return e.code();
      }
      return "";
    };
    std::string flipped = bytes;
    flipped[bytes.size() - 10] ^= 0x01;
    CHECK(code_of(flipped) == "CHECKSUM_MISMATCH");
    CHECK(code_of(bytes.substr(0, bytes.size() - 9)) == "TRUNCATED");
    CHECK(code_of(bytes.substr(0, 8)) == "TRUNCATED");
    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK(code_of(bad_magic) == "BAD_MAGIC");
    std::string bad_version = bytes;
    bad_version[4] = 9;
    CHECK(code_of(bad_version) == "VERSION_MISMATCH");
  }
}
