#include "protood/prototypes.hpp"

#include <algorithm>

#include "protood/error.hpp"

namespace protood {

PrototypeSet compute_image_prototypes(const EmbeddingSet& base, bool normalize_output) {
  require(base.modality == Modality::image, ErrorKind::BadConfig, "image prototypes need an image set");
  const std::size_t classes = base.class_count();
  const std::size_t dim = base.dim;

  // Per class and component, offsets from the smallest value are summed in
  // sorted order: the mean does not depend on record order, and a class of
  // identical records reproduces that record exactly.
  std::vector<std::vector<Vec>> columns(classes, std::vector<Vec>(dim));
  bool any_label = false;
  for (const auto& r : base.records) {
    if (!r.label) continue;
    require(*r.label < classes, ErrorKind::BadLabel, "label out of range");
    require(r.vector.size() == dim, ErrorKind::DimMismatch, "record dimension mismatch");
    any_label = true;
    for (std::size_t j = 0; j < dim; ++j) columns[*r.label][j].push_back(r.vector[j]);
  }
  require(any_label, ErrorKind::NoLabels, "no labeled records");

  PrototypeSet out;
  out.modality = Modality::image;
  out.dim = dim;
  out.normalized = normalize_output;
  out.class_names = base.class_names;
  out.vectors.reserve(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    require(!columns[c].front().empty(), ErrorKind::EmptyClass,
            "class '" + base.class_names[c] + "' has no labeled records");
    Vec mean(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      auto& col = columns[c][j];
      std::sort(col.begin(), col.end());
      double offset_sum = 0.0;
      for (double x : col) offset_sum += x - col.front();
      mean[j] = col.front() + offset_sum / static_cast<double>(col.size());
    }
    out.vectors.push_back(normalize_output ? unit_normalized(mean) : std::move(mean));
  }
  return out;
}

PrototypeSet text_prototypes_zero_shot(const TextEncoder& encoder, const std::vector<Vec>& class_tokens,
                                       const TokenSequence& template_tokens) {
  for (const Vec& t : template_tokens)
    require(t.size() == encoder.token_dim(), ErrorKind::DimMismatch, "template token dimension mismatch");
  PrototypeSet out;
  out.modality = Modality::text;
  out.dim = encoder.output_dim();
  out.class_names = default_class_names(class_tokens.size());
  for (const Vec& token : class_tokens) {
    require(token.size() == encoder.token_dim(), ErrorKind::DimMismatch, "class token dimension mismatch");
    TokenSequence seq = template_tokens;
    seq.push_back(token);
    out.vectors.push_back(encoder.encode(seq));
  }
  return out;
}

EmbeddingSet to_embedding_set(const PrototypeSet& protos) {
  EmbeddingSet set;
  set.dim = protos.dim;
  set.class_names = protos.class_names.empty() ? default_class_names(protos.class_count()) : protos.class_names;
  set.modality = protos.modality;
  set.normalized = protos.normalized;
  for (std::size_t c = 0; c < protos.class_count(); ++c) push_record(set, protos.vectors[c], c);
  return set;
}

PrototypeSet prototypes_from_set(const EmbeddingSet& set) {
  require(set.size() == set.class_count(), ErrorKind::ClassCountMismatch,
          "prototype file needs exactly one record per class");
  PrototypeSet out;
  out.modality = set.modality;
  out.dim = set.dim;
  out.normalized = set.normalized;
  out.class_names = set.class_names;
  for (std::size_t c = 0; c < set.size(); ++c) {
    require(set.records[c].label == c, ErrorKind::BadLabel,
            "prototype record " + std::to_string(c) + " must carry label " + std::to_string(c));
    out.vectors.push_back(set.records[c].vector);
  }
  return out;
}

std::vector<std::string> default_class_names(std::size_t count) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < count; ++c) names.push_back("class_" + std::to_string(c));
  return names;
}

}  // namespace protood
