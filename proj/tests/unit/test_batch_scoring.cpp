#include "doctest.h"
#include "oracles.hpp"
#include "protood/batch_scoring.hpp"
#include "protood/error.hpp"
#include "protood/synth.hpp"

using namespace protood;

namespace {

EmbeddingSet records(std::size_t n, std::size_t dim, std::uint64_t seed) {
  CounterStream rng(seed);
  EmbeddingSet s;
  s.dim = dim;
  s.class_names = {"a", "b", "c"};
  for (std::size_t i = 0; i < n; ++i) push_record(s, oracle::random_unit(rng, dim), std::nullopt);
  return s;
}

PrototypeSet protos(std::size_t c, std::size_t dim, std::uint64_t seed, Modality m = Modality::image) {
  CounterStream rng(seed);
  PrototypeSet p;
  p.modality = m;
  p.dim = dim;
  p.class_names = default_class_names(c);
  for (std::size_t k = 0; k < c; ++k) p.vectors.push_back(oracle::random_unit(rng, dim));
  return p;
}

}  // namespace

TEST_CASE("mcm with one prototype scores 1") {
  const EmbeddingSet s = records(20, 4, 1);
  const PrototypeSet one = protos(1, 4, 2);
  ScoringInputs in;
  in.text = &one;
  for (const auto& row : score_records(s, in)) {
    CHECK(row.score == 1.0);
    CHECK(row.predicted_class == 0);
  }
}

TEST_CASE("mmp with equal sets equals mcm row for row") {
  const EmbeddingSet s = records(30, 6, 3);
  const PrototypeSet p = protos(4, 6, 4);
  ScoringInputs mcm, mmp;
  mcm.text = &p;
  mmp.kind = ScoreKind::mmp;
  mmp.text = &p;
  mmp.image = &p;
  const auto a = score_records(s, mcm), b = score_records(s, mmp);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].score == b[i].score);
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].predicted_class == b[i].predicted_class);
  }
}

TEST_CASE("gmp through explicit mapped embeddings") {
  const auto f = oracle::gmp_fixture();
  EmbeddingSet s;
  s.dim = 6;
  s.class_names = {"t1", "t2"};
  push_record(s, f.image, std::nullopt);
  PrototypeSet text{Modality::text, 6, false, {"t1", "t2"}, f.text};
  PrototypeSet img{Modality::image, 6, false, {"t1", "t2"}, f.image_protos};
  const std::vector<Vec> mapped = {f.mapped};
  ScoringInputs in;
  in.kind = ScoreKind::gmp;
  in.cfg = ScoreConfig{1.0};
  in.text = &text;
  in.image = &img;
  in.mapped = &mapped;
  const auto rows = score_records(s, in);
  CHECK(rows[0].score == doctest::Approx(0.59637).epsilon(1e-5));
  CHECK(rows[0].predicted_class == 0);
}

TEST_CASE("missing inputs per score kind") {
  const EmbeddingSet s = records(3, 4, 5);
  const PrototypeSet p = protos(2, 4, 6);
  const std::vector<Vec> mapped(3, Vec{1, 0, 0, 0});
  auto fails = [&](ScoringInputs in) {
    CHECK_THROWS_WITH_AS(score_records(s, in), doctest::Contains("MissingInput"), Error);
  };
  ScoringInputs in;
  fails(in);
  in.kind = ScoreKind::mmp;
  in.text = &p;
  fails(in);
  in.kind = ScoreKind::gmp;
  in.image = &p;
  fails(in);
  in.mapped = &mapped;
  CHECK_NOTHROW(score_records(s, in));
}

TEST_CASE("serial and parallel scoring agree bitwise") {
  const EmbeddingSet s = records(200, 8, 7);
  const PrototypeSet t = protos(5, 8, 8), i = protos(5, 8, 9);
  std::vector<Vec> mapped;
  for (const auto& r : s.records) mapped.push_back(Vec(r.vector.rbegin(), r.vector.rend()));
  ScoringInputs in;
  in.kind = ScoreKind::gmp;
  in.text = &t;
  in.image = &i;
  in.mapped = &mapped;
  CHECK(score_records(s, in, Exec::serial) == score_records(s, in, Exec::parallel));
}

TEST_CASE("score csv round trip") {
  const std::vector<ScoreRow> rows = {{"0", ScoreKind::mcm, 0.125, 2}, {"1", ScoreKind::gmp, 1.0 / 3.0, 0}};
  const std::string csv = score_csv(rows);
  CHECK(csv.rfind("id,score_kind,score,predicted_class\n", 0) == 0);
  CHECK(parse_score_csv(csv) == rows);
  CHECK_THROWS_AS(parse_score_csv("id,score_kind,score,predicted_class\n0,xyz,0.5,1\n"), Error);
}
