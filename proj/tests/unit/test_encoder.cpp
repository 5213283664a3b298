#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "protood/encoder.hpp"
#include "protood/error.hpp"
#include "protood/prototypes.hpp"

using namespace protood;

namespace {

// Scalar loops over the published weights: mean-pool, affine, tanh, affine.
Vec scalar_encode(const FrozenTextEncoder& enc, const TokenSequence& seq) {
  const std::size_t n = enc.token_dim(), h = enc.hidden_dim(), d = enc.output_dim();
  std::vector<double> pooled(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (const auto& t : seq) pooled[j] += t[j];
    pooled[j] /= static_cast<double>(seq.size());
  }
  std::vector<double> hidden(h);
  for (std::size_t i = 0; i < h; ++i) {
    double a = enc.b1()[i];
    for (std::size_t j = 0; j < n; ++j) a += enc.w1()(i, j) * pooled[j];
    hidden[i] = std::tanh(a);
  }
  Vec out(d, 0.0);
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t i = 0; i < h; ++i) out[k] += enc.w2()(k, i) * hidden[i];
  return out;
}

TokenSequence random_sequence(CounterStream& rng, std::size_t len, std::size_t dim) {
  TokenSequence seq;
  for (std::size_t i = 0; i < len; ++i) seq.push_back(rng.normal_vector(dim));
  return seq;
}

}  // namespace

TEST_CASE("small encoder matches a scalar re-evaluation") {
  const FrozenTextEncoder enc(EncoderSpec{7, 3, 2, 2});
  CounterStream rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const TokenSequence seq = random_sequence(rng, 1 + trial % 4, 3);
    const Vec got = enc.encode(seq);
    const Vec want = scalar_encode(enc, seq);
    for (std::size_t k = 0; k < 2; ++k) CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-14));
  }
}

TEST_CASE("all-zero tokens encode to W2 tanh(b1)") {
  const FrozenTextEncoder enc(EncoderSpec{3, 4, 5, 6});
  const Vec got = enc.encode(TokenSequence(3, Vec(4, 0.0)));
  for (std::size_t k = 0; k < 6; ++k) {
    double want = 0.0;
    for (std::size_t i = 0; i < 5; ++i) want += enc.w2()(k, i) * std::tanh(enc.b1()[i]);
    CHECK(got[k] == doctest::Approx(want).epsilon(1e-14));
  }
}

TEST_CASE("equal seeds give extensionally equal encoders") {
  const FrozenTextEncoder a(EncoderSpec{9, 8, 8, 4}), b(EncoderSpec{9, 8, 8, 4}), c(EncoderSpec{10, 8, 8, 4});
  CounterStream rng(1);
  bool any_differs = false;
  for (int i = 0; i < 1000; ++i) {
    const TokenSequence seq = random_sequence(rng, 2, 8);
    CHECK(a.encode(seq) == b.encode(seq));
    any_differs = any_differs || a.encode(seq) != c.encode(seq);
  }
  CHECK(any_differs);
}

TEST_CASE("weight scale follows 1/sqrt(fan_in)") {
  const FrozenTextEncoder enc(EncoderSpec{1, 256, 128, 64});
  double s2 = 0.0;
  for (double x : enc.w1().data()) s2 += x * x;
  const double var = s2 / static_cast<double>(enc.w1().data().size());
  CHECK(var * 256.0 == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("output norm bound from tanh range") {
  const FrozenTextEncoder enc(EncoderSpec{4, 6, 5, 7});
  double frob = 0.0;
  for (double x : enc.w2().data()) frob += x * x;
  const double bound = std::sqrt(frob) * std::sqrt(5.0);
  CounterStream rng(3);
  for (int i = 0; i < 200; ++i) CHECK(l2_norm(enc.encode(random_sequence(rng, 3, 6))) <= bound);
}

TEST_CASE("vjp against central differences") {
  const FrozenTextEncoder enc(EncoderSpec{21, 5, 4, 3});
  CounterStream rng(8);
  const TokenSequence seq = random_sequence(rng, 3, 5);
  const Vec cot = rng.normal_vector(3);
  const auto grads = enc.encode_vjp(seq, cot);
  const double h = 1e-5;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    for (std::size_t j = 0; j < 5; ++j) {
      TokenSequence p = seq, m = seq;
      p[t][j] += h;
      m[t][j] -= h;
      const double num = (dot(cot, enc.encode(p)) - dot(cot, enc.encode(m))) / (2 * h);
      const double rel = std::fabs(grads[t][j] - num) / std::max({std::fabs(num), std::fabs(grads[t][j]), 1e-8});
      CHECK(rel <= 1e-4);
    }
  }
}

TEST_CASE("vjp is linear in the cotangent") {
  const FrozenTextEncoder enc(EncoderSpec{2, 4, 4, 4});
  CounterStream rng(4);
  const TokenSequence seq = random_sequence(rng, 2, 4);
  const Vec cot = rng.normal_vector(4);
  for (const auto& g : enc.encode_vjp(seq, Vec(4, 0.0)))
    for (double x : g) CHECK(x == 0.0);
  Vec twice = cot;
  for (double& x : twice) x *= 2.0;
  const auto g1 = enc.encode_vjp(seq, cot);
  const auto g2 = enc.encode_vjp(seq, twice);
  for (std::size_t t = 0; t < g1.size(); ++t)
    for (std::size_t j = 0; j < 4; ++j) CHECK(g2[t][j] == doctest::Approx(2.0 * g1[t][j]).epsilon(1e-14));
}

TEST_CASE("token dimension is checked") {
  const FrozenTextEncoder enc(EncoderSpec{1, 4, 4, 4});
  CHECK_THROWS_AS(enc.encode(TokenSequence{Vec(3, 0.0)}), Error);
  CHECK_THROWS_AS(enc.encode(TokenSequence{}), Error);
}

TEST_CASE("precomputed table encoder returns stored vectors") {
  const std::vector<Vec> table = {{0.1, 0.2}, {0.3, -0.4}, {1.0, 0.0}};
  const PrecomputedTableEncoder enc(table);
  const PrototypeSet p = text_prototypes_zero_shot(enc, one_hot_class_tokens(3), {});
  CHECK(p.vectors == table);
}

TEST_CASE("zero-shot text prototypes are deterministic and per-class") {
  const FrozenTextEncoder enc(EncoderSpec{5, 6, 6, 4});
  const auto tokens = make_class_tokens(12, 4, 6);
  CHECK(tokens == make_class_tokens(12, 4, 6));
  const TokenSequence tmpl(2, Vec(6, 0.25));
  const PrototypeSet a = text_prototypes_zero_shot(enc, tokens, tmpl);
  CHECK(a == text_prototypes_zero_shot(enc, tokens, tmpl));
  const std::vector<Vec> swapped = {tokens[2], tokens[1], tokens[0], tokens[3]};
  const PrototypeSet b = text_prototypes_zero_shot(enc, swapped, tmpl);
  CHECK(b.vectors[0] == a.vectors[2]);
  CHECK(b.vectors[2] == a.vectors[0]);
  CHECK(b.vectors[3] == a.vectors[3]);
}
