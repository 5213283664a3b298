#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "protood/linalg.hpp"
#include "protood/prototypes.hpp"

namespace protood {

struct ScoreConfig {
  // CLIP convention (logit scale 100).
  double tau = 0.01;

  void validate() const;
};

enum class ScoreKind { mcm, mmp, gmp };

std::string_view to_string(ScoreKind kind);
ScoreKind score_kind_from_string(std::string_view s);

enum class Decision { id, ood };

// max_c softmax_c(cos(image, prototype_c) / tau), computed as
// 1 / sum_j exp(z_j - z_max) so a uniform row gives exactly 1/C.
double mcm_score(std::span<const double> image, std::span<const Vec> prototypes, const ScoreConfig& cfg);
double mcm_score(std::span<const double> image, const PrototypeSet& prototypes, const ScoreConfig& cfg);

// Mean of the image-prototype and text-prototype MCM terms.
double mmp_score(std::span<const double> image, std::span<const Vec> text, std::span<const Vec> image_protos,
                 const ScoreConfig& cfg);
double mmp_score(std::span<const double> image, const PrototypeSet& text, const PrototypeSet& image_protos,
                 const ScoreConfig& cfg);

// Mean of four MCM terms: {image, mapped image} x {text, image prototypes}.
double gmp_score(std::span<const double> image, std::span<const double> mapped, std::span<const Vec> text,
                 std::span<const Vec> image_protos, const ScoreConfig& cfg);
double gmp_score(std::span<const double> image, std::span<const double> mapped, const PrototypeSet& text,
                 const PrototypeSet& image_protos, const ScoreConfig& cfg);

// argmax_c cos(image, prototype_c); lowest index wins ties.
std::size_t predict_class(std::span<const double> image, std::span<const Vec> prototypes);

// OOD iff score <= gamma.
Decision decide(double score, double gamma);

// Numerically stable cross-entropy -log softmax(logits)[target].
double cross_entropy(std::span<const double> logits, std::size_t target);
Vec softmax(std::span<const double> logits);

}  // namespace protood
