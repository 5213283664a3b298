#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protood/embedding_store.hpp"
#include "protood/encoder.hpp"
#include "protood/exec.hpp"
#include "protood/linalg.hpp"
#include "protood/prototypes.hpp"

namespace protood {

struct TrainConfig {
  std::size_t epochs = 50;
  double learning_rate = 0.002;
  std::size_t batch_size = 32;
  std::size_t context_length = 16;
  double momentum = 0.9;
  double alpha = 0.005;
  double beta = 0.1;
  double tau = 0.01;
  std::uint64_t seed = 0;
  // Meta-net hidden width; 0 selects max(4, d / 4).
  std::size_t meta_hidden = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct TunerDims {
  std::size_t embed_dim = 0;    // d
  std::size_t token_dim = 0;    // N_lm
  std::size_t context_length = 0;
  std::size_t meta_hidden = 0;
};

std::size_t default_meta_hidden(std::size_t embed_dim);

// All trainable state. Block order here is the on-disk order.
struct TunerParams {
  Matrix context;  // L x N_lm
  Matrix meta_w1;  // h_m x d
  Vec meta_b1;     // h_m
  Matrix meta_w2;  // N_lm x h_m
  Vec meta_b2;     // N_lm
  Vec mu;          // N_lm
  Vec sigma;       // N_lm, diagonal Cholesky factor of the bias covariance
  Matrix w_it;     // d x d, image -> text map
  Matrix w_ti;     // d x d, text -> image map

  static TunerParams zeros(const TunerDims& dims);
  static TunerParams initial(const TunerDims& dims, std::uint64_t seed);

  TunerDims dims() const;

  // Calls f(name, span, rows, cols) for every block in on-disk order.
  template <class F>
  void for_each_block(F&& f) { visit(*this, f); }
  template <class F>
  void for_each_block(F&& f) const { visit(*this, f); }

  std::size_t parameter_count() const;
  void add_scaled(const TunerParams& other, double scale);
  bool all_finite() const;

  bool operator==(const TunerParams&) const = default;

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    f("context", std::span(self.context.data()), self.context.rows(), self.context.cols());
    f("meta_w1", std::span(self.meta_w1.data()), self.meta_w1.rows(), self.meta_w1.cols());
    f("meta_b1", std::span(self.meta_b1), self.meta_b1.size(), std::size_t{1});
    f("meta_w2", std::span(self.meta_w2.data()), self.meta_w2.rows(), self.meta_w2.cols());
    f("meta_b2", std::span(self.meta_b2), self.meta_b2.size(), std::size_t{1});
    f("mu", std::span(self.mu), self.mu.size(), std::size_t{1});
    f("sigma", std::span(self.sigma), self.sigma.size(), std::size_t{1});
    f("w_it", std::span(self.w_it.data()), self.w_it.rows(), self.w_it.cols());
    f("w_ti", std::span(self.w_ti.data()), self.w_ti.rows(), self.w_ti.cols());
  }
};

// Gradient-check groups: context, meta (all four meta-net blocks), mu, sigma, w_it, w_ti.
std::string_view block_group(std::string_view block_name);

struct LossBreakdown {
  double l_id = 0.0;
  double l_inter = 0.0;
  double l_intra = 0.0;
  double l_bias = 0.0;
  double total = 0.0;

  // total = l_id + alpha (l_intra + l_inter) + beta l_bias
  static LossBreakdown combine(double l_id, double l_inter, double l_intra, double l_bias, double alpha,
                               double beta);
};

struct TrainSample {
  Vec image;
  std::size_t label = 0;
};

std::vector<TrainSample> labeled_samples(const EmbeddingSet& set);

// b = mu + sigma * noise (componentwise).
Vec sample_bias(std::span<const double> mu, std::span<const double> sigma, std::span<const double> noise);

// m(I) = W2 relu(W1 I + b1) + b2.
Vec meta_net(std::span<const double> image, const TunerParams& params);

// [V_1 + mI + b, ..., V_L + mI + b, class_token]
TokenSequence build_idbp(const Matrix& context, std::span<const double> mapped_image, std::span<const double> bias,
                         std::span<const double> class_token);

double loss_id(std::span<const double> image, std::span<const Vec> text_protos, std::size_t true_class,
               double tau);
double loss_inter(std::span<const double> image, std::span<const Vec> text_protos, std::size_t true_class,
                  const Matrix& w_it, const Matrix& w_ti, double tau);
double loss_intra(std::span<const double> image, std::span<const Vec> text_protos, const Matrix& w_it,
                  const Matrix& w_ti);
double loss_bias(std::span<const double> mu, std::span<const double> bias, std::span<const double> mapped_image);

struct ForwardBackward {
  LossBreakdown loss;
  TunerParams grad;
};

// Batch-mean loss and its exact reverse-mode gradient. One noise draw is
// shared by every image in the batch; prompts are rebuilt per image.
// Per-image work may run in parallel; the reduction is always in batch order.
ForwardBackward forward_backward(std::span<const TrainSample> batch, const TunerParams& params,
                                 const FrozenTextEncoder& encoder, const std::vector<Vec>& class_tokens,
                                 const TrainConfig& cfg, std::span<const double> noise,
                                 Exec exec = Exec::serial);

// Forward pass only; same value as forward_backward().loss.
LossBreakdown evaluate_loss(std::span<const TrainSample> batch, const TunerParams& params,
                            const FrozenTextEncoder& encoder, const std::vector<Vec>& class_tokens,
                            const TrainConfig& cfg, std::span<const double> noise);

// Classical momentum: v <- momentum v + g; p <- p - lr v. Throws NonFinite.
void sgd_step(TunerParams& params, const TunerParams& grads, TunerParams& velocity, double learning_rate,
              double momentum);

struct TrainedModel {
  FrozenTextEncoder encoder{EncoderSpec{}};
  std::uint64_t class_token_seed = 0;
  std::vector<std::string> class_names;
  TrainConfig config;
  TunerParams params;

  std::vector<Vec> class_tokens() const;
};

struct TrainResult {
  TrainedModel model;
  // Entry 0 is the loss at initialization, entry k the loss after epoch k,
  // each over the whole training set with b = mu.
  std::vector<LossBreakdown> history;
};

TrainResult train(const EmbeddingSet& train_set, const FrozenTextEncoder& encoder, std::uint64_t class_token_seed,
                  const TrainConfig& cfg, Exec exec = Exec::parallel);

// Model before any optimizer step, as train() would start it.
TrainedModel initial_model(const EmbeddingSet& train_set, const FrozenTextEncoder& encoder,
                           std::uint64_t class_token_seed, const TrainConfig& cfg);

// Text prototypes at inference: b = mu, prompts conditioned on m(conditioning).
// The usual conditioning vector is the test image itself.
PrototypeSet infer_prototypes(const TrainedModel& model, std::span<const double> conditioning,
                              const std::vector<Vec>& class_tokens);

// I' = W_it I
Vec map_image(const TrainedModel& model, std::span<const double> image);

// Manifest JSON beside a raw little-endian binary64 file holding the blocks in
// TunerParams order. `manifest` names the JSON file; the binary file takes the
// same stem with a .bin extension.
void save_model(const TrainedModel& model, const std::filesystem::path& manifest);
TrainedModel load_model(const std::filesystem::path& manifest);

std::string loss_history_csv(std::span<const LossBreakdown> history);

}  // namespace protood
