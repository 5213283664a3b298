#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "protood/embedding_store.hpp"
#include "protood/exec.hpp"
#include "protood/prototypes.hpp"
#include "protood/scoring.hpp"
#include "protood/tuner.hpp"

namespace protood {

struct ScoreRow {
  std::string id;
  ScoreKind kind = ScoreKind::mcm;
  double score = 0.0;
  std::size_t predicted_class = 0;

  bool operator==(const ScoreRow&) const = default;
};

// What a batch scoring run may draw on. Text prototypes come from the model
// (rebuilt per record) when one is given, else from `text`. GMP's mapped
// embedding comes from `mapped` (one per record) when given, else from the
// model's image-to-text map.
struct ScoringInputs {
  ScoreKind kind = ScoreKind::mcm;
  ScoreConfig cfg;
  const PrototypeSet* text = nullptr;
  const PrototypeSet* image = nullptr;
  const std::vector<Vec>* mapped = nullptr;
  const TrainedModel* model = nullptr;
  // Condition model prompts on this vector instead of each record.
  std::optional<Vec> conditioning;
};

// One row per record in record order; predictions use the text prototypes.
std::vector<ScoreRow> score_records(const EmbeddingSet& set, const ScoringInputs& inputs, Exec exec = Exec::parallel);

// CSV: id,score_kind,score,predicted_class
std::string score_csv(const std::vector<ScoreRow>& rows);
std::vector<ScoreRow> parse_score_csv(std::string_view text);

}  // namespace protood
