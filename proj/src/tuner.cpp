#include "protood/tuner.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "protood/error.hpp"
#include "protood/random.hpp"
#include "protood/scoring.hpp"
#include "protood/text_format.hpp"

namespace protood {

namespace {

double sign(double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); }

void require_dim(std::span<const double> v, std::size_t n, const char* what) {
  require(v.size() == n, ErrorKind::DimMismatch,
          std::string(what) + " has dimension " + std::to_string(v.size()) + ", expected " + std::to_string(n));
}

Matrix normal_matrix(CounterStream& stream, std::size_t rows, std::size_t cols, double stddev) {
  Matrix m(rows, cols);
  for (double& x : m.data()) x = stddev * stream.next_normal();
  return m;
}

struct ImageResult {
  double l_id = 0.0;
  double l_inter = 0.0;
  double l_intra = 0.0;
  double l_bias = 0.0;
  TunerParams grad;
};

// Loss terms for one image, and (when grad is requested) the gradient of
// l_id + alpha (l_inter + l_intra) + beta l_bias for that image.
ImageResult image_pass(const TrainSample& sample, const TunerParams& p, const FrozenTextEncoder& encoder,
                       const std::vector<Vec>& class_tokens, const TrainConfig& cfg, std::span<const double> noise,
                       std::span<const double> bias, bool want_grad) {
  const Vec& image = sample.image;
  const std::size_t classes = class_tokens.size();
  const std::size_t d = image.size();
  const std::size_t n_lm = encoder.token_dim();
  const std::size_t ctx = p.context.rows();
  const double tau = cfg.tau;
  require(sample.label < classes, ErrorKind::BadClass, "sample label out of range");
  require_dim(image, p.meta_w1.cols(), "image");

  // Meta-net, keeping the pre-activation for the relu mask.
  Vec pre = matvec(p.meta_w1, image);
  for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += p.meta_b1[i];
  Vec act(pre.size());
  for (std::size_t i = 0; i < pre.size(); ++i) act[i] = std::max(pre[i], 0.0);
  Vec mapped = matvec(p.meta_w2, act);
  for (std::size_t i = 0; i < mapped.size(); ++i) mapped[i] += p.meta_b2[i];

  std::vector<TokenSequence> prompts(classes);
  std::vector<Vec> protos(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    prompts[c] = build_idbp(p.context, mapped, bias, class_tokens[c]);
    protos[c] = encoder.encode(prompts[c]);
    require_dim(protos[c], d, "text prototype");
  }

  ImageResult out;
  out.l_id = loss_id(image, protos, sample.label, tau);
  out.l_inter = loss_inter(image, protos, sample.label, p.w_it, p.w_ti, tau);
  out.l_intra = loss_intra(image, protos, p.w_it, p.w_ti);
  out.l_bias = loss_bias(p.mu, bias, mapped);
  if (!want_grad) return out;

  const double alpha = cfg.alpha;
  const double beta = cfg.beta;
  TunerParams& g = out.grad;
  g = TunerParams::zeros(p.dims());
  std::vector<Vec> g_protos(classes, Vec(d, 0.0));

  // l_id: cross-entropy over cos(I, P_c) / tau.
  {
    Vec logits(classes);
    for (std::size_t c = 0; c < classes; ++c) logits[c] = cosine(image, protos[c]) / tau;
    const Vec prob = softmax(logits);
    for (std::size_t c = 0; c < classes; ++c) {
      const double coef = (prob[c] - (c == sample.label ? 1.0 : 0.0)) / tau;
      accumulate_cosine_grad(image, protos[c], coef, {}, g_protos[c]);
    }
  }

  std::vector<Vec> mapped_protos(classes);  // Q_c = W_ti P_c
  for (std::size_t c = 0; c < classes; ++c) mapped_protos[c] = matvec(p.w_ti, protos[c]);
  const Vec mapped_image = matvec(p.w_it, image);  // J = W_it I
  std::vector<Vec> g_mapped_protos(classes, Vec(d, 0.0));
  Vec g_mapped_image(d, 0.0);

  // l_inter, first term: cos(I, Q_c).
  {
    Vec logits(classes);
    for (std::size_t c = 0; c < classes; ++c) logits[c] = cosine(image, mapped_protos[c]) / tau;
    const Vec prob = softmax(logits);
    for (std::size_t c = 0; c < classes; ++c) {
      const double coef = alpha * (prob[c] - (c == sample.label ? 1.0 : 0.0)) / tau;
      accumulate_cosine_grad(image, mapped_protos[c], coef, {}, g_mapped_protos[c]);
    }
  }
  // l_inter, second term: cos(J, P_c).
  {
    Vec logits(classes);
    for (std::size_t c = 0; c < classes; ++c) logits[c] = cosine(mapped_image, protos[c]) / tau;
    const Vec prob = softmax(logits);
    for (std::size_t c = 0; c < classes; ++c) {
      const double coef = alpha * (prob[c] - (c == sample.label ? 1.0 : 0.0)) / tau;
      accumulate_cosine_grad(mapped_image, protos[c], coef, g_mapped_image, g_protos[c]);
    }
  }

  // l_intra, image term: |I - W_ti J|_1.
  {
    const Vec recon = matvec(p.w_ti, mapped_image);
    Vec s(d);
    for (std::size_t i = 0; i < d; ++i) s[i] = alpha * sign(image[i] - recon[i]);
    add_outer(g.w_ti, s, mapped_image, -1.0);
    axpy(-1.0, matvec_transposed(p.w_ti, s), g_mapped_image);
  }
  // l_intra, prototype terms: |P_c - W_it Q_c|_1.
  for (std::size_t c = 0; c < classes; ++c) {
    const Vec recon = matvec(p.w_it, mapped_protos[c]);
    Vec s(d);
    for (std::size_t i = 0; i < d; ++i) s[i] = alpha * sign(protos[c][i] - recon[i]);
    axpy(1.0, s, g_protos[c]);
    add_outer(g.w_it, s, mapped_protos[c], -1.0);
    axpy(-1.0, matvec_transposed(p.w_it, s), g_mapped_protos[c]);
  }

  for (std::size_t c = 0; c < classes; ++c) {
    add_outer(g.w_ti, g_mapped_protos[c], protos[c]);
    axpy(1.0, matvec_transposed(p.w_ti, g_mapped_protos[c]), g_protos[c]);
  }
  add_outer(g.w_it, g_mapped_image, image);

  // l_bias = |mu - m(I)|_1 + |b - m(I)|_1.
  Vec g_bias(n_lm, 0.0);
  Vec g_meta_out(n_lm, 0.0);
  for (std::size_t i = 0; i < n_lm; ++i) {
    const double s_mu = beta * sign(p.mu[i] - mapped[i]);
    const double s_b = beta * sign(bias[i] - mapped[i]);
    g.mu[i] += s_mu;
    g_bias[i] += s_b;
    g_meta_out[i] -= s_mu + s_b;
  }

  // Through the frozen encoder into the prompt tokens. Context token l is
  // V_l + m(I) + b; the class token is frozen.
  Vec g_shift(n_lm, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    const std::vector<Vec> token_grads = encoder.encode_vjp(prompts[c], g_protos[c]);
    for (std::size_t l = 0; l < ctx; ++l) {
      axpy(1.0, token_grads[l], g.context.row(l));
      axpy(1.0, token_grads[l], g_shift);
    }
  }
  axpy(1.0, g_shift, g_meta_out);
  axpy(1.0, g_shift, g_bias);

  // b = mu + sigma * noise
  for (std::size_t i = 0; i < n_lm; ++i) {
    g.mu[i] += g_bias[i];
    g.sigma[i] += g_bias[i] * noise[i];
  }

  // Meta-net backward.
  axpy(1.0, g_meta_out, g.meta_b2);
  add_outer(g.meta_w2, g_meta_out, act);
  Vec g_act = matvec_transposed(p.meta_w2, g_meta_out);
  for (std::size_t i = 0; i < g_act.size(); ++i)
    if (!(pre[i] > 0.0)) g_act[i] = 0.0;
  add_outer(g.meta_w1, g_act, image);
  axpy(1.0, g_act, g.meta_b1);
  return out;
}

void check_batch_inputs(std::span<const TrainSample> batch, const TunerParams& params,
                        const FrozenTextEncoder& encoder, const std::vector<Vec>& class_tokens,
                        std::span<const double> noise) {
  require(!batch.empty(), ErrorKind::EmptyInput, "empty batch");
  require(!class_tokens.empty(), ErrorKind::EmptyInput, "no class tokens");
  const std::size_t n_lm = encoder.token_dim();
  require(params.context.cols() == n_lm, ErrorKind::DimMismatch, "context tokens do not match encoder");
  require(params.w_it.rows() == encoder.output_dim(), ErrorKind::DimMismatch,
          "cross-modal maps do not match encoder output");
  require_dim(noise, n_lm, "noise");
  for (const Vec& t : class_tokens) require_dim(t, n_lm, "class token");
}

LossBreakdown batch_mean(const std::vector<ImageResult>& results, const TrainConfig& cfg) {
  double l_id = 0.0, l_inter = 0.0, l_intra = 0.0, l_bias = 0.0;
  for (const auto& r : results) {
    l_id += r.l_id;
    l_inter += r.l_inter;
    l_intra += r.l_intra;
    l_bias += r.l_bias;
  }
  const double n = static_cast<double>(results.size());
  return LossBreakdown::combine(l_id / n, l_inter / n, l_intra / n, l_bias / n, cfg.alpha, cfg.beta);
}

void shuffle_in_place(std::vector<std::size_t>& order, std::uint64_t seed) {
  CounterStream stream(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[stream.next_below(i)]);
}

}  // namespace

void TrainConfig::validate() const {
  require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorKind::BadConfig, "learning_rate must be positive");
  require(batch_size > 0, ErrorKind::BadConfig, "batch_size must be positive");
  require(context_length > 0, ErrorKind::BadConfig, "context_length must be positive");
  require(momentum >= 0.0 && momentum < 1.0, ErrorKind::BadConfig, "momentum must be in [0, 1)");
  require(alpha >= 0.0 && beta >= 0.0, ErrorKind::BadConfig, "alpha and beta must be non-negative");
  require(tau > 0.0 && std::isfinite(tau), ErrorKind::BadConfig, "tau must be positive");
}

std::size_t default_meta_hidden(std::size_t embed_dim) { return std::max<std::size_t>(4, embed_dim / 4); }

TunerParams TunerParams::zeros(const TunerDims& dims) {
  TunerParams p;
  p.context = Matrix(dims.context_length, dims.token_dim);
  p.meta_w1 = Matrix(dims.meta_hidden, dims.embed_dim);
  p.meta_b1 = Vec(dims.meta_hidden, 0.0);
  p.meta_w2 = Matrix(dims.token_dim, dims.meta_hidden);
  p.meta_b2 = Vec(dims.token_dim, 0.0);
  p.mu = Vec(dims.token_dim, 0.0);
  p.sigma = Vec(dims.token_dim, 0.0);
  p.w_it = Matrix(dims.embed_dim, dims.embed_dim);
  p.w_ti = Matrix(dims.embed_dim, dims.embed_dim);
  return p;
}

TunerParams TunerParams::initial(const TunerDims& dims, std::uint64_t seed) {
  TunerParams p = zeros(dims);
  CounterStream ctx_stream(derive_seed(seed, "context"));
  p.context = normal_matrix(ctx_stream, dims.context_length, dims.token_dim, 0.02);
  CounterStream meta_stream(derive_seed(seed, "meta-net"));
  p.meta_w1 = normal_matrix(meta_stream, dims.meta_hidden, dims.embed_dim,
                            1.0 / std::sqrt(static_cast<double>(dims.embed_dim)));
  p.meta_w2 = normal_matrix(meta_stream, dims.token_dim, dims.meta_hidden,
                            1.0 / std::sqrt(static_cast<double>(dims.meta_hidden)));
  p.sigma = Vec(dims.token_dim, 0.01);
  p.w_it = Matrix::identity(dims.embed_dim);
  p.w_ti = Matrix::identity(dims.embed_dim);
  return p;
}

TunerDims TunerParams::dims() const {
  return {w_it.rows(), context.cols(), context.rows(), meta_w1.rows()};
}

std::size_t TunerParams::parameter_count() const {
  std::size_t n = 0;
  for_each_block([&](std::string_view, std::span<const double> b, std::size_t, std::size_t) { n += b.size(); });
  return n;
}

void TunerParams::add_scaled(const TunerParams& other, double scale) {
  std::vector<std::span<const double>> src;
  other.for_each_block([&](std::string_view, std::span<const double> b, std::size_t, std::size_t) { src.push_back(b); });
  std::size_t k = 0;
  for_each_block([&](std::string_view, std::span<double> b, std::size_t, std::size_t) { axpy(scale, src[k++], b); });
}

bool TunerParams::all_finite() const {
  bool ok = true;
  for_each_block([&](std::string_view, std::span<const double> b, std::size_t, std::size_t) {
    ok = ok && protood::all_finite(b);
  });
  return ok;
}

std::string_view block_group(std::string_view name) {
  if (name.starts_with("meta_")) return "meta";
  return name;
}

LossBreakdown LossBreakdown::combine(double l_id, double l_inter, double l_intra, double l_bias, double alpha,
                                     double beta) {
  return {l_id, l_inter, l_intra, l_bias, l_id + alpha * (l_intra + l_inter) + beta * l_bias};
}

std::vector<TrainSample> labeled_samples(const EmbeddingSet& set) {
  std::vector<TrainSample> out;
  for (const auto& r : set.records)
    if (r.label) out.push_back({r.vector, *r.label});
  return out;
}

Vec sample_bias(std::span<const double> mu, std::span<const double> sigma, std::span<const double> noise) {
  require(mu.size() == sigma.size() && mu.size() == noise.size(), ErrorKind::DimMismatch,
          "mu, sigma and noise must share a dimension");
  Vec b(mu.size());
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = mu[i] + sigma[i] * noise[i];
  return b;
}

Vec meta_net(std::span<const double> image, const TunerParams& params) {
  require_dim(image, params.meta_w1.cols(), "image");
  Vec hidden = matvec(params.meta_w1, image);
  for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] = std::max(hidden[i] + params.meta_b1[i], 0.0);
  Vec out = matvec(params.meta_w2, hidden);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += params.meta_b2[i];
  return out;
}

TokenSequence build_idbp(const Matrix& context, std::span<const double> mapped_image, std::span<const double> bias,
                         std::span<const double> class_token) {
  const std::size_t n = context.cols();
  require_dim(mapped_image, n, "m(I)");
  require_dim(bias, n, "bias");
  require_dim(class_token, n, "class token");
  TokenSequence seq;
  seq.reserve(context.rows() + 1);
  for (std::size_t l = 0; l < context.rows(); ++l) {
    const auto v = context.row(l);
    Vec token(n);
    for (std::size_t i = 0; i < n; ++i) token[i] = v[i] + mapped_image[i] + bias[i];
    seq.push_back(std::move(token));
  }
  seq.emplace_back(class_token.begin(), class_token.end());
  return seq;
}

double loss_id(std::span<const double> image, std::span<const Vec> text_protos, std::size_t true_class,
               double tau) {
  require(true_class < text_protos.size(), ErrorKind::BadClass, "true class out of range");
  Vec logits(text_protos.size());
  for (std::size_t c = 0; c < text_protos.size(); ++c) {
    require_dim(text_protos[c], image.size(), "text prototype");
    logits[c] = cosine(image, text_protos[c]) / tau;
  }
  return cross_entropy(logits, true_class);
}

double loss_inter(std::span<const double> image, std::span<const Vec> text_protos, std::size_t true_class,
                  const Matrix& w_it, const Matrix& w_ti, double tau) {
  require(true_class < text_protos.size(), ErrorKind::BadClass, "true class out of range");
  const Vec mapped_image = matvec(w_it, image);
  Vec to_image(text_protos.size());
  Vec to_text(text_protos.size());
  for (std::size_t c = 0; c < text_protos.size(); ++c) {
    to_image[c] = cosine(image, matvec(w_ti, text_protos[c])) / tau;
    to_text[c] = cosine(mapped_image, text_protos[c]) / tau;
  }
  return cross_entropy(to_image, true_class) + cross_entropy(to_text, true_class);
}

double loss_intra(std::span<const double> image, std::span<const Vec> text_protos, const Matrix& w_it,
                  const Matrix& w_ti) {
  auto residual = [](std::span<const double> x, const Vec& recon) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - recon[i]);
    return s;
  };
  double total = residual(image, matvec(w_ti, matvec(w_it, image)));
  for (const Vec& proto : text_protos) total += residual(proto, matvec(w_it, matvec(w_ti, proto)));
  return total;
}

double loss_bias(std::span<const double> mu, std::span<const double> bias, std::span<const double> mapped_image) {
  require(mu.size() == bias.size() && mu.size() == mapped_image.size(), ErrorKind::DimMismatch,
          "mu, b and m(I) must share a dimension");
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    a += std::abs(mu[i] - mapped_image[i]);
    b += std::abs(bias[i] - mapped_image[i]);
  }
  return a + b;
}

ForwardBackward forward_backward(std::span<const TrainSample> batch, const TunerParams& params,
                                 const FrozenTextEncoder& encoder, const std::vector<Vec>& class_tokens,
                                 const TrainConfig& cfg, std::span<const double> noise, Exec exec) {
  check_batch_inputs(batch, params, encoder, class_tokens, noise);
  const Vec bias = sample_bias(params.mu, params.sigma, noise);
  std::vector<ImageResult> results(batch.size());
  parallel_for(batch.size(), exec, [&](std::size_t i) {
    results[i] = image_pass(batch[i], params, encoder, class_tokens, cfg, noise, bias, true);
  });

  ForwardBackward out;
  out.loss = batch_mean(results, cfg);
  out.grad = TunerParams::zeros(params.dims());
  for (const auto& r : results) out.grad.add_scaled(r.grad, 1.0);
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.grad.for_each_block([&](std::string_view, std::span<double> b, std::size_t, std::size_t) {
    for (double& x : b) x *= inv;
  });
  return out;
}

LossBreakdown evaluate_loss(std::span<const TrainSample> batch, const TunerParams& params,
                            const FrozenTextEncoder& encoder, const std::vector<Vec>& class_tokens,
                            const TrainConfig& cfg, std::span<const double> noise) {
  check_batch_inputs(batch, params, encoder, class_tokens, noise);
  const Vec bias = sample_bias(params.mu, params.sigma, noise);
  std::vector<ImageResult> results(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    results[i] = image_pass(batch[i], params, encoder, class_tokens, cfg, noise, bias, false);
  return batch_mean(results, cfg);
}

void sgd_step(TunerParams& params, const TunerParams& grads, TunerParams& velocity, double learning_rate,
              double momentum) {
  std::vector<std::span<const double>> g;
  grads.for_each_block([&](std::string_view, std::span<const double> b, std::size_t, std::size_t) { g.push_back(b); });
  std::vector<std::span<double>> v;
  velocity.for_each_block([&](std::string_view, std::span<double> b, std::size_t, std::size_t) { v.push_back(b); });
  std::size_t k = 0;
  params.for_each_block([&](std::string_view name, std::span<double> p, std::size_t, std::size_t) {
    require(g[k].size() == p.size() && v[k].size() == p.size(), ErrorKind::DimMismatch,
            "gradient shape mismatch in block " + std::string(name));
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[k][i] = momentum * v[k][i] + g[k][i];
      p[i] -= learning_rate * v[k][i];
      require(std::isfinite(p[i]) && std::isfinite(v[k][i]), ErrorKind::NonFinite,
              "non-finite update in block " + std::string(name));
    }
    ++k;
  });
}

std::vector<Vec> TrainedModel::class_tokens() const {
  return make_class_tokens(class_token_seed, class_names.size(), encoder.token_dim());
}

TrainedModel initial_model(const EmbeddingSet& train_set, const FrozenTextEncoder& encoder,
                           std::uint64_t class_token_seed, const TrainConfig& cfg) {
  cfg.validate();
  require(train_set.dim == encoder.output_dim(), ErrorKind::DimMismatch,
          "embedding dimension " + std::to_string(train_set.dim) + " does not match encoder output " +
              std::to_string(encoder.output_dim()));
  TunerDims dims{train_set.dim, encoder.token_dim(), cfg.context_length,
                 cfg.meta_hidden ? cfg.meta_hidden : default_meta_hidden(train_set.dim)};
  TrainedModel model{encoder, class_token_seed, train_set.class_names, cfg, {}};
  model.params = TunerParams::initial(dims, derive_seed(cfg.seed, "init"));
  return model;
}

TrainResult train(const EmbeddingSet& train_set, const FrozenTextEncoder& encoder, std::uint64_t class_token_seed,
                  const TrainConfig& cfg, Exec exec) {
  TrainResult result{initial_model(train_set, encoder, class_token_seed, cfg), {}};
  TrainedModel& model = result.model;

  const std::vector<TrainSample> samples = labeled_samples(train_set);
  require(!samples.empty(), ErrorKind::NoLabels, "training set has no labeled records");
  std::vector<std::size_t> per_class(train_set.class_count(), 0);
  for (const auto& s : samples) ++per_class[s.label];
  for (std::size_t c = 0; c < per_class.size(); ++c)
    require(per_class[c] > 0, ErrorKind::EmptyClass, "class '" + train_set.class_names[c] + "' has no samples");

  const std::vector<Vec> tokens = model.class_tokens();
  const Vec zero_noise(encoder.token_dim(), 0.0);
  result.history.push_back(evaluate_loss(samples, model.params, encoder, tokens, cfg, zero_noise));

  TunerParams velocity = TunerParams::zeros(model.params.dims());
  std::vector<std::size_t> order(samples.size());
  const std::uint64_t shuffle_seed = derive_seed(cfg.seed, "shuffle");
  const std::uint64_t noise_seed = derive_seed(cfg.seed, "bias-noise");
  std::uint64_t step = 0;
  std::vector<TrainSample> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_in_place(order, derive_seed(shuffle_seed, epoch));
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(samples[order[i]]);
      const Vec noise = CounterStream(derive_seed(noise_seed, step)).normal_vector(encoder.token_dim());
      const ForwardBackward fb = forward_backward(batch, model.params, encoder, tokens, cfg, noise, exec);
      sgd_step(model.params, fb.grad, velocity, cfg.learning_rate, cfg.momentum);
    }
    result.history.push_back(evaluate_loss(samples, model.params, encoder, tokens, cfg, zero_noise));
  }
  return result;
}

PrototypeSet infer_prototypes(const TrainedModel& model, std::span<const double> conditioning,
                              const std::vector<Vec>& class_tokens) {
  const Vec mapped = meta_net(conditioning, model.params);
  PrototypeSet out;
  out.modality = Modality::text;
  out.dim = model.encoder.output_dim();
  out.class_names = model.class_names;
  out.vectors.reserve(class_tokens.size());
  for (const Vec& token : class_tokens)
    out.vectors.push_back(model.encoder.encode(build_idbp(model.params.context, mapped, model.params.mu, token)));
  return out;
}

Vec map_image(const TrainedModel& model, std::span<const double> image) { return matvec(model.params.w_it, image); }

void save_model(const TrainedModel& model, const std::filesystem::path& manifest) {
  std::filesystem::path bin_path = manifest;
  bin_path.replace_extension(".bin");

  nlohmann::ordered_json j;
  j["format"] = "protood-model-1";
  const EncoderSpec& es = model.encoder.spec();
  j["encoder"] = {{"seed", es.seed}, {"token_dim", es.token_dim}, {"hidden", es.hidden}, {"output_dim", es.output_dim}};
  j["class_token_seed"] = model.class_token_seed;
  j["classes"] = model.class_names;
  const TrainConfig& c = model.config;
  j["config"] = {{"epochs", c.epochs},         {"learning_rate", c.learning_rate},
                 {"batch_size", c.batch_size}, {"context_length", c.context_length},
                 {"momentum", c.momentum},     {"alpha", c.alpha},
                 {"beta", c.beta},             {"tau", c.tau},
                 {"seed", c.seed},             {"meta_hidden", c.meta_hidden}};
  const TunerDims dims = model.params.dims();
  j["dims"] = {{"embed_dim", dims.embed_dim},
               {"token_dim", dims.token_dim},
               {"context_length", dims.context_length},
               {"meta_hidden", dims.meta_hidden}};
  j["parameters"] = bin_path.filename().string();

  std::string blob;
  auto blocks = nlohmann::ordered_json::array();
  model.params.for_each_block([&](std::string_view name, std::span<const double> b, std::size_t rows, std::size_t cols) {
    blocks.push_back({{"name", name}, {"rows", rows}, {"cols", cols}, {"offset", blob.size()}});
    for (double x : b) {
      const auto bits = std::bit_cast<std::uint64_t>(x);
      for (int i = 0; i < 8; ++i) blob.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
    }
  });
  j["blocks"] = blocks;

  write_file(manifest, j.dump(2) + "\n");
  write_file(bin_path, blob);
}

TrainedModel load_model(const std::filesystem::path& manifest) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(manifest));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadHeader, "model manifest: " + std::string(e.what()));
  }
  try {
    require(j.at("format") == "protood-model-1", ErrorKind::BadHeader, "unknown model format");
    const auto& e = j.at("encoder");
    EncoderSpec spec{e.at("seed").get<std::uint64_t>(), e.at("token_dim").get<std::size_t>(),
                     e.at("hidden").get<std::size_t>(), e.at("output_dim").get<std::size_t>()};
    TrainedModel model{FrozenTextEncoder(spec), j.at("class_token_seed").get<std::uint64_t>(),
                       j.at("classes").get<std::vector<std::string>>(), {}, {}};
    const auto& c = j.at("config");
    TrainConfig& cfg = model.config;
    cfg.epochs = c.at("epochs").get<std::size_t>();
    cfg.learning_rate = c.at("learning_rate").get<double>();
    cfg.batch_size = c.at("batch_size").get<std::size_t>();
    cfg.context_length = c.at("context_length").get<std::size_t>();
    cfg.momentum = c.at("momentum").get<double>();
    cfg.alpha = c.at("alpha").get<double>();
    cfg.beta = c.at("beta").get<double>();
    cfg.tau = c.at("tau").get<double>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    cfg.meta_hidden = c.at("meta_hidden").get<std::size_t>();
    const auto& d = j.at("dims");
    const TunerDims dims{d.at("embed_dim").get<std::size_t>(), d.at("token_dim").get<std::size_t>(),
                         d.at("context_length").get<std::size_t>(), d.at("meta_hidden").get<std::size_t>()};
    require(dims.token_dim == spec.token_dim && dims.embed_dim == spec.output_dim, ErrorKind::DimMismatch,
            "model dims disagree with encoder");
    model.params = TunerParams::zeros(dims);

    const std::string blob = read_file(manifest.parent_path() / j.at("parameters").get<std::string>());
    require(blob.size() == model.params.parameter_count() * 8, ErrorKind::DimMismatch,
            "parameter file size does not match manifest dims");
    const auto& blocks = j.at("blocks");
    std::size_t k = 0;
    model.params.for_each_block([&](std::string_view name, std::span<double> b, std::size_t rows, std::size_t cols) {
      const auto& entry = blocks.at(k++);
      require(entry.at("name") == name && entry.at("rows") == rows && entry.at("cols") == cols, ErrorKind::BadHeader,
              "block table mismatch at " + std::string(name));
      std::size_t offset = entry.at("offset").get<std::size_t>();
      require(offset + b.size() * 8 <= blob.size(), ErrorKind::DimMismatch, "block overruns parameter file");
      for (double& x : b) {
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i)
          bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(blob[offset + i])) << (8 * i);
        x = std::bit_cast<double>(bits);
        offset += 8;
      }
    });
    require(model.params.all_finite(), ErrorKind::NonFinite, "model parameters are not finite");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadHeader, "model manifest: " + std::string(e.what()));
  }
}

std::string loss_history_csv(std::span<const LossBreakdown> history) {
  std::ostringstream out;
  out << "epoch,l_id,l_inter,l_intra,l_bias,total\n";
  for (std::size_t e = 0; e < history.size(); ++e) {
    const auto& h = history[e];
    out << e << ',' << format_double(h.l_id) << ',' << format_double(h.l_inter) << ',' << format_double(h.l_intra)
        << ',' << format_double(h.l_bias) << ',' << format_double(h.total) << '\n';
  }
  return out.str();
}

}  // namespace protood
