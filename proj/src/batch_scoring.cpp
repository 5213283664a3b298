#include "protood/batch_scoring.hpp"

#include <sstream>

#include "protood/error.hpp"
#include "protood/text_format.hpp"

namespace protood {

std::vector<ScoreRow> score_records(const EmbeddingSet& set, const ScoringInputs& in, Exec exec) {
  in.cfg.validate();
  require(in.model != nullptr || in.text != nullptr, ErrorKind::MissingInput,
          "scoring needs text prototypes or a trained model");
  if (in.kind != ScoreKind::mcm)
    require(in.image != nullptr, ErrorKind::MissingInput,
            std::string(to_string(in.kind)) + " needs image prototypes");
  if (in.kind == ScoreKind::gmp)
    require(in.mapped != nullptr || in.model != nullptr, ErrorKind::MissingInput,
            "gmp needs a trained model or mapped embeddings");
  if (in.mapped) require(in.mapped->size() == set.size(), ErrorKind::LengthMismatch, "one mapped embedding per record");
  if (in.text && in.image)
    require(in.text->class_count() == in.image->class_count(), ErrorKind::ClassCountMismatch,
            "text and image prototype sets differ in class count");

  std::vector<Vec> tokens;
  if (in.model) tokens = in.model->class_tokens();

  std::vector<ScoreRow> rows(set.size());
  parallel_for(set.size(), exec, [&](std::size_t i) {
    const auto& rec = set.records[i];
    const Vec& image = rec.vector;
    PrototypeSet per_record;
    const std::vector<Vec>* text = in.text ? &in.text->vectors : nullptr;
    if (in.model) {
      per_record = infer_prototypes(*in.model, in.conditioning ? *in.conditioning : image, tokens);
      text = &per_record.vectors;
    }
    double score = 0.0;
    switch (in.kind) {
      case ScoreKind::mcm:
        score = mcm_score(image, *text, in.cfg);
        break;
      case ScoreKind::mmp:
        score = mmp_score(image, *text, in.image->vectors, in.cfg);
        break;
      case ScoreKind::gmp: {
        const Vec mapped = in.mapped ? (*in.mapped)[i] : map_image(*in.model, image);
        score = gmp_score(image, mapped, *text, in.image->vectors, in.cfg);
        break;
      }
    }
    rows[i] = {rec.id, in.kind, score, predict_class(image, *text)};
  });
  return rows;
}

std::string score_csv(const std::vector<ScoreRow>& rows) {
  std::ostringstream out;
  out << "id,score_kind,score,predicted_class\n";
  for (const auto& r : rows)
    out << r.id << ',' << to_string(r.kind) << ',' << format_double(r.score) << ',' << r.predicted_class << '\n';
  return out.str();
}

std::vector<ScoreRow> parse_score_csv(std::string_view text) {
  std::vector<ScoreRow> rows;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (header) {
      require(f.size() == 4 && f[0] == "id" && f[1] == "score_kind" && f[2] == "score" && f[3] == "predicted_class",
              ErrorKind::BadHeader, "score CSV header must be id,score_kind,score,predicted_class");
      header = false;
      continue;
    }
    require(f.size() == 4, ErrorKind::BadHeader, "score CSV row needs 4 fields");
    std::size_t predicted = 0;
    try {
      predicted = std::stoull(f[3]);
    } catch (const std::exception&) {
      throw Error(ErrorKind::BadHeader, "bad predicted_class '" + f[3] + "'");
    }
    rows.push_back({f[0], score_kind_from_string(f[1]), parse_double(f[2]), predicted});
  }
  require(!header, ErrorKind::BadHeader, "empty score CSV");
  return rows;
}

}  // namespace protood
