#pragma once

#include <string>
#include <vector>

#include "protood/embedding_store.hpp"
#include "protood/encoder.hpp"

namespace protood {

// One reference vector per class, in class order.
struct PrototypeSet {
  Modality modality = Modality::image;
  std::size_t dim = 0;
  bool normalized = false;
  std::vector<std::string> class_names;
  std::vector<Vec> vectors;

  std::size_t class_count() const noexcept { return vectors.size(); }

  bool operator==(const PrototypeSet&) const = default;
};

// Per-class mean of labeled records; unlabeled rows are skipped. The mean is
// taken over raw vectors, then optionally rescaled to unit norm.
PrototypeSet compute_image_prototypes(const EmbeddingSet& base, bool normalize_output = true);

// Prototype c = encode(template_tokens ++ [class_tokens[c]]).
PrototypeSet text_prototypes_zero_shot(const TextEncoder& encoder, const std::vector<Vec>& class_tokens,
                                       const TokenSequence& template_tokens);

// Prototype files are ordinary OODEMB1 sets with one record per class,
// labeled with its class index.
EmbeddingSet to_embedding_set(const PrototypeSet& protos);
PrototypeSet prototypes_from_set(const EmbeddingSet& set);

std::vector<std::string> default_class_names(std::size_t count);

}  // namespace protood
