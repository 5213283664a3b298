#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "protood/embedding_store.hpp"
#include "protood/encoder.hpp"
#include "protood/exec.hpp"
#include "protood/prototypes.hpp"
#include "protood/scoring.hpp"

namespace protood {

struct SynthConfig {
  std::size_t classes = 10;
  std::size_t dim = 64;
  std::size_t n_per_class_train = 16;
  std::size_t n_per_class_test = 200;
  std::size_t n_ood = 2000;
  double noise_scale = 0.15;
  // Interpolation weight of text prototypes toward a shared anchor.
  double gap = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

struct World {
  PrototypeSet image_protos;
  PrototypeSet text_protos;
  EmbeddingSet train;
  EmbeddingSet test;
  EmbeddingSet ood;
  double gap = 0.0;
};

// Orthonormal class prototypes p_c plus an anchor orthogonal to all of them.
// ID samples are unit(p_c + eps z); text prototypes are
// unit((1 - gap) p_c + gap anchor); OOD samples are unit(u + eps z) with u the
// unit centroid of the class prototypes, so they are equally similar to every
// class in expectation.
World generate_world(const SynthConfig& cfg);

struct AssumptionReport {
  // mean cos(ID, own image prototype) - mean cos(ID, own text prototype)
  double a2_margin = 0.0;
  bool a2_pass = false;
  // mean intra-class pairwise cosine - mean inter-class pairwise cosine
  double a3_margin = 0.0;
  bool a3_pass = false;
  // max over modalities of (max_c - min_c) of mean cos(OOD, prototype_c)
  double a4_spread = 0.0;
  bool a4_pass = false;

  bool pass() const { return a2_pass && a3_pass && a4_pass; }
};

inline constexpr double kMaxOodSpread = 0.05;

AssumptionReport check_assumptions(const World& world);

struct TheoremReport {
  double delta_mmp = 0.0;
  double delta_mcm = 0.0;
  double stderr_mmp = 0.0;
  double stderr_mcm = 0.0;
  std::size_t trials = 0;
  bool pass = false;
  // Worst assumption diagnostics across trials.
  double a2_margin_min = 0.0;
  double a3_margin_min = 0.0;
  double a4_spread_max = 0.0;
  bool assumptions_pass = false;
  // max over all scored samples of |S_MMP(x) - S_MCM(x)|
  double max_samplewise_gap = 0.0;
  double tau = 1.0;
};

inline constexpr std::size_t kMinTheoremTrials = 10;

// Estimates E[S(ID)] - E[S(OOD)] for MMP and MCM over independent worlds
// (trial t uses seed derive_seed(cfg.seed, t)); pass iff
// delta_mmp >= delta_mcm - 2 sqrt(stderr_mmp^2 + stderr_mcm^2).
TheoremReport verify_theorem(const SynthConfig& cfg, std::size_t trials, const ScoreConfig& score_cfg,
                             Exec exec = Exec::parallel);

std::string to_json(const TheoremReport& report);

struct TuningTaskConfig {
  std::size_t classes = 10;
  std::size_t n_per_class_train = 16;
  std::size_t n_per_class_test = 100;
  std::size_t n_ood = 1000;
  // OOD samples come from this many extra classes of the same encoder.
  std::size_t ood_classes = 10;
  double noise_scale = 0.15;
  std::size_t context_length = 16;
  std::uint64_t seed = 1;
};

// Few-shot task in the encoder's own output space. Zero-shot text prototypes
// use all-zero context tokens; image class centers are those prototypes with
// the ID text centroid removed, renormalized. The removed centroid is the
// modality gap the tuner has to close. OOD samples are drawn around centers of
// unseen classes from the same token table.
World generate_tuning_task(const TuningTaskConfig& cfg, const FrozenTextEncoder& encoder,
                           std::uint64_t class_token_seed);

}  // namespace protood
