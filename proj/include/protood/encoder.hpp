#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "protood/linalg.hpp"

namespace protood {

// Learned context tokens followed by one class token, each of the encoder's
// token dimension.
using TokenSequence = std::vector<Vec>;

// Maps a token sequence to a text embedding.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::size_t token_dim() const = 0;
  virtual std::size_t output_dim() const = 0;
  virtual Vec encode(const TokenSequence& seq) const = 0;
};

struct EncoderSpec {
  std::uint64_t seed = 0;
  std::size_t token_dim = 64;
  std::size_t hidden = 64;
  std::size_t output_dim = 64;

  bool operator==(const EncoderSpec&) const = default;
};

// Frozen surrogate text encoder: e = W2 * tanh(W1 * meanpool(tokens) + b1).
// Weights are i.i.d. normal with stddev 1/sqrt(fan_in), drawn from counter
// streams keyed by the seed, so an encoder is fully described by its EncoderSpec.
class FrozenTextEncoder final : public TextEncoder {
 public:
  explicit FrozenTextEncoder(const EncoderSpec& spec);

  const EncoderSpec& spec() const noexcept { return spec_; }
  std::size_t token_dim() const override { return spec_.token_dim; }
  std::size_t output_dim() const override { return spec_.output_dim; }
  std::size_t hidden_dim() const noexcept { return spec_.hidden; }

  Vec encode(const TokenSequence& seq) const override;

  // Gradient of <cotangent, encode(seq)> with respect to every token. All
  // tokens receive the same vector: the pooled gradient over the token count.
  std::vector<Vec> encode_vjp(const TokenSequence& seq, std::span<const double> cotangent) const;

  // Pooled-input forms used by the tuner, which builds the pooled vector itself.
  Vec encode_pooled(std::span<const double> pooled) const;
  Vec pooled_vjp(std::span<const double> pooled, std::span<const double> cotangent) const;

  const Matrix& w1() const noexcept { return w1_; }
  const Vec& b1() const noexcept { return b1_; }
  const Matrix& w2() const noexcept { return w2_; }

 private:
  Vec pool(const TokenSequence& seq) const;

  EncoderSpec spec_;
  Matrix w1_;
  Vec b1_;
  Matrix w2_;
};

// Stand-in for an encoder over real prompts: returns stored class embeddings.
// Its token space is one-hot over classes; encode looks at the final token only.
class PrecomputedTableEncoder final : public TextEncoder {
 public:
  explicit PrecomputedTableEncoder(std::vector<Vec> table);

  std::size_t token_dim() const override { return table_.size(); }
  std::size_t output_dim() const override { return dim_; }
  Vec encode(const TokenSequence& seq) const override;

 private:
  std::vector<Vec> table_;
  std::size_t dim_ = 0;
};

std::vector<Vec> one_hot_class_tokens(std::size_t count);

// Frozen per-class token vectors, standard normal, each a pure function of
// (seed, class index).
std::vector<Vec> make_class_tokens(std::uint64_t seed, std::size_t count, std::size_t token_dim);

}  // namespace protood
