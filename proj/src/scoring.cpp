#include "protood/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "protood/error.hpp"

namespace protood {

namespace {

Vec cosine_logits(std::span<const double> image, std::span<const Vec> prototypes, double tau) {
  require(!prototypes.empty(), ErrorKind::EmptyInput, "no prototypes");
  const double image_norm = l2_norm(image);
  require(image_norm > 0.0, ErrorKind::ZeroVector, "zero input embedding");
  Vec logits(prototypes.size());
  for (std::size_t c = 0; c < prototypes.size(); ++c) {
    require(prototypes[c].size() == image.size(), ErrorKind::DimMismatch,
            "prototype dimension " + std::to_string(prototypes[c].size()) + " vs input " +
                std::to_string(image.size()));
    logits[c] = cosine(image, prototypes[c]) / tau;
  }
  return logits;
}

}  // namespace

void ScoreConfig::validate() const {
  require(tau > 0.0 && std::isfinite(tau), ErrorKind::BadConfig, "tau must be positive");
}

std::string_view to_string(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::mcm: return "mcm";
    case ScoreKind::mmp: return "mmp";
    case ScoreKind::gmp: return "gmp";
  }
  return "?";
}

ScoreKind score_kind_from_string(std::string_view s) {
  if (s == "mcm") return ScoreKind::mcm;
  if (s == "mmp") return ScoreKind::mmp;
  if (s == "gmp") return ScoreKind::gmp;
  throw Error(ErrorKind::BadConfig, "unknown score kind '" + std::string(s) + "'");
}

Vec softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  Vec p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += (p[i] = std::exp(logits[i] - top));
  for (double& x : p) x /= sum;
  return p;
}

double cross_entropy(std::span<const double> logits, std::size_t target) {
  require(target < logits.size(), ErrorKind::BadClass, "target class out of range");
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - top);
  return (top - logits[target]) + std::log(sum);
}

double mcm_score(std::span<const double> image, std::span<const Vec> prototypes, const ScoreConfig& cfg) {
  cfg.validate();
  const Vec logits = cosine_logits(image, prototypes, cfg.tau);
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - top);
  return 1.0 / sum;
}

double mcm_score(std::span<const double> image, const PrototypeSet& prototypes, const ScoreConfig& cfg) {
  return mcm_score(image, prototypes.vectors, cfg);
}

double mmp_score(std::span<const double> image, std::span<const Vec> text, std::span<const Vec> image_protos,
                 const ScoreConfig& cfg) {
  require(text.size() == image_protos.size(), ErrorKind::ClassCountMismatch,
          "text and image prototype sets differ in class count");
  return (mcm_score(image, image_protos, cfg) + mcm_score(image, text, cfg)) / 2.0;
}

double mmp_score(std::span<const double> image, const PrototypeSet& text, const PrototypeSet& image_protos,
                 const ScoreConfig& cfg) {
  return mmp_score(image, text.vectors, image_protos.vectors, cfg);
}

double gmp_score(std::span<const double> image, std::span<const double> mapped, std::span<const Vec> text,
                 std::span<const Vec> image_protos, const ScoreConfig& cfg) {
  require(text.size() == image_protos.size(), ErrorKind::ClassCountMismatch,
          "text and image prototype sets differ in class count");
  require(mapped.size() == image.size(), ErrorKind::DimMismatch, "mapped embedding dimension mismatch");
  // Paired sums keep the collapse case (mapped == image, text == image_protos)
  // bitwise equal to the single MCM term.
  const double direct = mcm_score(image, text, cfg) + mcm_score(image, image_protos, cfg);
  const double crossed = mcm_score(mapped, text, cfg) + mcm_score(mapped, image_protos, cfg);
  return (direct + crossed) / 4.0;
}

double gmp_score(std::span<const double> image, std::span<const double> mapped, const PrototypeSet& text,
                 const PrototypeSet& image_protos, const ScoreConfig& cfg) {
  return gmp_score(image, mapped, text.vectors, image_protos.vectors, cfg);
}

std::size_t predict_class(std::span<const double> image, std::span<const Vec> prototypes) {
  const Vec sims = cosine_logits(image, prototypes, 1.0);
  return static_cast<std::size_t>(std::max_element(sims.begin(), sims.end()) - sims.begin());
}

Decision decide(double score, double gamma) { return score <= gamma ? Decision::ood : Decision::id; }

}  // namespace protood
