#include "protood/encoder.hpp"

#include <cmath>

#include "protood/error.hpp"
#include "protood/random.hpp"

namespace protood {

namespace {

Matrix normal_matrix(std::uint64_t seed, std::size_t rows, std::size_t cols, double stddev) {
  CounterStream stream(seed);
  Matrix m(rows, cols);
  for (double& x : m.data()) x = stddev * stream.next_normal();
  return m;
}

}  // namespace

FrozenTextEncoder::FrozenTextEncoder(const EncoderSpec& spec) : spec_(spec) {
  require(spec.token_dim > 0 && spec.hidden > 0 && spec.output_dim > 0, ErrorKind::BadConfig,
          "encoder dimensions must be positive");
  const double in_scale = 1.0 / std::sqrt(static_cast<double>(spec.token_dim));
  const double hidden_scale = 1.0 / std::sqrt(static_cast<double>(spec.hidden));
  w1_ = normal_matrix(derive_seed(spec.seed, "encoder.w1"), spec.hidden, spec.token_dim, in_scale);
  b1_ = CounterStream(derive_seed(spec.seed, "encoder.b1")).normal_vector(spec.hidden, in_scale);
  w2_ = normal_matrix(derive_seed(spec.seed, "encoder.w2"), spec.output_dim, spec.hidden, hidden_scale);
}

Vec FrozenTextEncoder::pool(const TokenSequence& seq) const {
  require(!seq.empty(), ErrorKind::DimMismatch, "empty token sequence");
  Vec pooled(spec_.token_dim, 0.0);
  for (const Vec& t : seq) {
    require(t.size() == spec_.token_dim, ErrorKind::DimMismatch,
            "token has dimension " + std::to_string(t.size()) + ", encoder expects " +
                std::to_string(spec_.token_dim));
    for (std::size_t i = 0; i < t.size(); ++i) pooled[i] += t[i];
  }
  const double inv = 1.0 / static_cast<double>(seq.size());
  for (double& x : pooled) x *= inv;
  return pooled;
}

Vec FrozenTextEncoder::encode_pooled(std::span<const double> pooled) const {
  Vec hidden = matvec(w1_, pooled);
  for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] = std::tanh(hidden[i] + b1_[i]);
  return matvec(w2_, hidden);
}

Vec FrozenTextEncoder::pooled_vjp(std::span<const double> pooled, std::span<const double> cotangent) const {
  require(cotangent.size() == spec_.output_dim, ErrorKind::DimMismatch, "cotangent dimension mismatch");
  Vec pre = matvec(w1_, pooled);
  Vec g = matvec_transposed(w2_, cotangent);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double t = std::tanh(pre[i] + b1_[i]);
    g[i] *= 1.0 - t * t;
  }
  return matvec_transposed(w1_, g);
}

Vec FrozenTextEncoder::encode(const TokenSequence& seq) const { return encode_pooled(pool(seq)); }

std::vector<Vec> FrozenTextEncoder::encode_vjp(const TokenSequence& seq, std::span<const double> cotangent) const {
  Vec g = pooled_vjp(pool(seq), cotangent);
  const double inv = 1.0 / static_cast<double>(seq.size());
  for (double& x : g) x *= inv;
  return std::vector<Vec>(seq.size(), g);
}

PrecomputedTableEncoder::PrecomputedTableEncoder(std::vector<Vec> table) : table_(std::move(table)) {
  require(!table_.empty(), ErrorKind::EmptyInput, "empty prototype table");
  dim_ = table_.front().size();
  for (const Vec& v : table_) require(v.size() == dim_, ErrorKind::DimMismatch, "ragged prototype table");
}

Vec PrecomputedTableEncoder::encode(const TokenSequence& seq) const {
  require(!seq.empty(), ErrorKind::DimMismatch, "empty token sequence");
  const Vec& last = seq.back();
  require(last.size() == table_.size(), ErrorKind::DimMismatch, "class token is not one-hot over the table");
  for (std::size_t c = 0; c < last.size(); ++c)
    if (last[c] == 1.0) return table_[c];
  throw Error(ErrorKind::BadClass, "class token is not one-hot over the table");
}

std::vector<Vec> one_hot_class_tokens(std::size_t count) {
  std::vector<Vec> tokens(count, Vec(count, 0.0));
  for (std::size_t c = 0; c < count; ++c) tokens[c][c] = 1.0;
  return tokens;
}

std::vector<Vec> make_class_tokens(std::uint64_t seed, std::size_t count, std::size_t token_dim) {
  const std::uint64_t base = derive_seed(seed, "class-tokens");
  std::vector<Vec> tokens;
  tokens.reserve(count);
  for (std::size_t c = 0; c < count; ++c)
    tokens.push_back(CounterStream(derive_seed(base, c)).normal_vector(token_dim));
  return tokens;
}

}  // namespace protood
