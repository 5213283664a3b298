#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "protood/encoder.hpp"
#include "protood/gradcheck.hpp"
#include "protood/scoring.hpp"
#include "protood/synth.hpp"
#include "protood/tuner.hpp"

namespace protood {

// Flat run configuration. Every key can come from the JSON config file or a
// command-line override; unknown keys are rejected. All randomness derives
// from `seed` through named subseeds (see derive_seed).
struct RunConfig {
  std::uint64_t seed = 1;

  double tau = 0.01;
  // The separation theorem is stated for a plain softmax over cosines.
  double theorem_tau = 1.0;

  std::size_t epochs = 50;
  double learning_rate = 0.002;
  std::size_t batch_size = 32;
  std::size_t context_length = 16;
  double momentum = 0.9;
  double alpha = 0.005;
  double beta = 0.1;
  std::size_t meta_hidden = 0;

  std::size_t token_dim = 64;
  std::size_t encoder_hidden = 0;  // 0: same as token_dim

  std::string world = "theorem";  // or "tuning"
  std::size_t classes = 10;
  std::size_t dim = 64;
  std::size_t n_per_class_train = 16;
  std::size_t n_per_class_test = 200;
  std::size_t n_ood = 2000;
  double noise_scale = 0.15;
  double gap = 0.5;
  std::size_t ood_classes = 10;
  std::size_t trials = 20;

  std::size_t gradcheck_dim = 8;
  std::size_t gradcheck_classes = 3;
  std::size_t gradcheck_context_length = 2;
  std::size_t gradcheck_token_dim = 8;
  std::size_t gradcheck_batch = 4;
  double gradcheck_tau = 0.1;
  double gradcheck_alpha = 1.0;
  double gradcheck_beta = 1.0;

  std::string output_dir;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);
  static const std::vector<std::string>& keys();

  // Override one key from its textual form.
  void set(std::string_view key, std::string_view value);
  nlohmann::ordered_json to_json() const;

  SynthConfig synth() const;
  TuningTaskConfig tuning_task() const;
  TrainConfig train() const;
  EncoderSpec encoder(std::size_t output_dim) const;
  ScoreConfig score() const;
  ScoreConfig theorem_score() const;
  GradcheckConfig gradcheck() const;
  std::uint64_t class_token_seed() const;
};

}  // namespace protood
