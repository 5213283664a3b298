#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "oracles.hpp"
#include "protood/error.hpp"
#include "protood/gradcheck.hpp"
#include "protood/synth.hpp"
#include "protood/tuner.hpp"

using namespace protood;

namespace {

void fill(TunerParams& p, double value) {
  p.for_each_block([&](std::string_view, std::span<double> v, std::size_t, std::size_t) {
    for (double& x : v) x = value;
  });
}

bool all_equal(const TunerParams& p, double value) {
  bool ok = true;
  p.for_each_block([&](std::string_view, std::span<const double> v, std::size_t, std::size_t) {
    for (double x : v) ok = ok && x == value;
  });
  return ok;
}

double max_abs_diff(const TunerParams& a, const TunerParams& b) {
  std::vector<double> flat_a, flat_b;
  a.for_each_block([&](std::string_view, std::span<const double> v, std::size_t, std::size_t) {
    flat_a.insert(flat_a.end(), v.begin(), v.end());
  });
  b.for_each_block([&](std::string_view, std::span<const double> v, std::size_t, std::size_t) {
    flat_b.insert(flat_b.end(), v.begin(), v.end());
  });
  REQUIRE(flat_a.size() == flat_b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < flat_a.size(); ++i) m = std::max(m, std::fabs(flat_a[i] - flat_b[i]));
  return m;
}

struct Instance {
  FrozenTextEncoder encoder{EncoderSpec{31, 6, 6, 5}};
  std::vector<Vec> tokens = make_class_tokens(4, 3, 6);
  TunerParams params;
  std::vector<TrainSample> batch;
  Vec noise;
  TrainConfig cfg;

  Instance() {
    cfg.context_length = 2;
    cfg.tau = 0.2;
    cfg.alpha = 0.5;
    cfg.beta = 0.3;
    params = TunerParams::initial(TunerDims{5, 6, 2, 4}, 77);
    CounterStream rng(12);
    TunerParams bump = TunerParams::zeros(params.dims());
    bump.for_each_block([&](std::string_view, std::span<double> v, std::size_t, std::size_t) {
      for (double& x : v) x = 0.3 * rng.next_normal();
    });
    params.add_scaled(bump, 1.0);
    for (std::size_t i = 0; i < 6; ++i) batch.push_back({oracle::random_unit(rng, 5), i % 3});
    noise = rng.normal_vector(6);
  }
};

EmbeddingSet small_task(std::uint64_t seed, const FrozenTextEncoder& enc, std::uint64_t token_seed) {
  TuningTaskConfig t;
  t.classes = 4;
  t.n_per_class_train = 8;
  t.n_per_class_test = 4;
  t.n_ood = 4;
  t.ood_classes = 2;
  t.context_length = 4;
  t.seed = seed;
  return generate_tuning_task(t, enc, token_seed).train;
}

}  // namespace

TEST_CASE("sample_bias") {
  CHECK(sample_bias(Vec{1.0, -2.0}, Vec{3.0, 4.0}, Vec{0.0, 0.0}) == Vec{1.0, -2.0});
  CHECK(sample_bias(Vec{1.0}, Vec{2.0}, Vec{0.5}) == Vec{2.0});
  CHECK(sample_bias(Vec{0.25, 1.0}, Vec{0.0, 0.0}, Vec{9.0, -9.0}) == Vec{0.25, 1.0});
}

TEST_CASE("meta_net") {
  TunerParams p = TunerParams::zeros(TunerDims{3, 4, 1, 2});
  CHECK(meta_net(Vec{1, 2, 3}, p) == Vec(4, 0.0));

  CounterStream rng(9);
  for (double& x : p.meta_w1.data()) x = rng.next_normal();
  for (double& x : p.meta_w2.data()) x = rng.next_normal();
  p.meta_b2 = rng.normal_vector(4);
  p.meta_b1 = Vec(2, -1e3);
  CHECK(meta_net(Vec{0.1, -0.2, 0.3}, p) == p.meta_b2);

  p.meta_b1 = rng.normal_vector(2);
  const Vec x = {0.4, -0.7, 0.2};
  const Vec got = meta_net(x, p);
  for (std::size_t k = 0; k < 4; ++k) {
    double want = p.meta_b2[k];
    for (std::size_t j = 0; j < 2; ++j) {
      double pre = p.meta_b1[j];
      for (std::size_t i = 0; i < 3; ++i) pre += p.meta_w1(j, i) * x[i];
      want += p.meta_w2(k, j) * (pre > 0 ? pre : 0.0);
    }
    CHECK(got[k] == doctest::Approx(want).epsilon(1e-14));
  }
}

TEST_CASE("build_idbp") {
  Matrix v(1, 2);
  v(0, 0) = 1.0;
  v(0, 1) = 2.0;
  const TokenSequence seq = build_idbp(v, Vec{0.5, 0.5}, Vec{0.1, -0.1}, Vec{9.0, 8.0});
  REQUIRE(seq.size() == 2);
  CHECK(seq[0][0] == doctest::Approx(1.6));
  CHECK(seq[0][1] == doctest::Approx(2.4));
  CHECK(seq[1] == Vec{9.0, 8.0});

  Matrix ctx(3, 2);
  ctx(2, 1) = 5.0;
  const TokenSequence plain = build_idbp(ctx, Vec{0, 0}, Vec{0, 0}, Vec{1, 1});
  CHECK(plain[2] == Vec{0.0, 5.0});
  CHECK(plain[3] == Vec{1.0, 1.0});
  CHECK(build_idbp(ctx, Vec{0.3, 0.1}, Vec{-1, 2}, Vec{1, 1}) == build_idbp(ctx, Vec{-1, 2}, Vec{0.3, 0.1}, Vec{1, 1}));
}

TEST_CASE("loss_id") {
  const Vec img = {1, 0, 0};
  const std::vector<Vec> protos = {{0.8, 0.6, 0}, {0.2, 0, std::sqrt(0.96)}};
  CHECK(loss_id(img, protos, 0, 1.0) == doctest::Approx(0.43749).epsilon(1e-5));
  CHECK(loss_id(img, std::vector<Vec>{{0.3, 1, 0}}, 0, 0.01) == 0.0);
  const std::vector<Vec> orth = {{0, 1, 0}, {0, 0, 1}, {0, -1, 0}, {0, 0, -1}};
  CHECK(loss_id(img, orth, 2, 0.5) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("loss_inter") {
  const Matrix id2 = Matrix::identity(2);
  const std::vector<Vec> protos = {{1, 0}, {0, 1}};
  CHECK(loss_inter(Vec{1, 0}, protos, 0, id2, id2, 1.0) == doctest::Approx(0.62652).epsilon(1e-5));
  CHECK(loss_inter(Vec{1, 0}, std::vector<Vec>{{0.2, 0.9}}, 0, id2, id2, 0.1) == 0.0);

  CounterStream rng(2);
  const Matrix id4 = Matrix::identity(4);
  std::vector<Vec> p;
  for (int c = 0; c < 4; ++c) p.push_back(oracle::random_unit(rng, 4));
  const Vec x = oracle::random_unit(rng, 4);
  const std::vector<Vec> swapped = {p[0], p[3], p[1], p[2]};
  CHECK(loss_inter(x, p, 0, id4, id4, 0.3) == doctest::Approx(loss_inter(x, swapped, 0, id4, id4, 0.3)));
}

TEST_CASE("loss_intra") {
  const Matrix id2 = Matrix::identity(2);
  Matrix w_ti(2, 2);
  w_ti(0, 0) = 0.9;
  w_ti(1, 0) = 0.1;
  w_ti(1, 1) = 0.5;
  const std::vector<Vec> one = {{0, 1}};
  CHECK(loss_intra(Vec{1, 0}, one, id2, w_ti) == doctest::Approx(0.7).epsilon(1e-12));

  CounterStream rng(4);
  std::vector<Vec> p = {rng.normal_vector(2), rng.normal_vector(2), rng.normal_vector(2)};
  CHECK(loss_intra(Vec{0.3, -2}, p, id2, id2) == 0.0);
  std::vector<Vec> rev(p.rbegin(), p.rend());
  CHECK(loss_intra(Vec{0.3, -2}, p, w_ti, id2) == doctest::Approx(loss_intra(Vec{0.3, -2}, rev, w_ti, id2)));
}

TEST_CASE("loss_bias") {
  CHECK(loss_bias(Vec{0, 0}, Vec{0.5, 0.5}, Vec{1, 1}) == doctest::Approx(3.0));
  CHECK(loss_bias(Vec{0.2, 3}, Vec{0.2, 3}, Vec{0.2, 3}) == 0.0);
  CHECK(loss_bias(Vec{0.1, -4}, Vec{2, 0.5}, Vec{1, 1}) == loss_bias(Vec{2, 0.5}, Vec{0.1, -4}, Vec{1, 1}));
}

TEST_CASE("loss breakdown combines with the configured weights") {
  const LossBreakdown l = LossBreakdown::combine(0.5, 0.25, 0.125, 2.0, 0.1, 0.3);
  CHECK(std::fabs(l.total - (0.5 + 0.1 * (0.25 + 0.125) + 0.3 * 2.0)) <= 1e-12);
}

TEST_CASE("forward_backward: losses are non-negative and match evaluate_loss") {
  Instance in;
  const auto fb = forward_backward(in.batch, in.params, in.encoder, in.tokens, in.cfg, in.noise);
  const LossBreakdown ev = evaluate_loss(in.batch, in.params, in.encoder, in.tokens, in.cfg, in.noise);
  CHECK(fb.loss.total == ev.total);
  for (double v : {fb.loss.l_id, fb.loss.l_inter, fb.loss.l_intra, fb.loss.l_bias}) CHECK(v >= 0.0);
  CHECK(std::fabs(fb.loss.total - (fb.loss.l_id + in.cfg.alpha * (fb.loss.l_inter + fb.loss.l_intra) +
                                   in.cfg.beta * fb.loss.l_bias)) <= 1e-12);
}

TEST_CASE("forward_backward: central differences on every parameter") {
  Instance in;
  const auto fb = forward_backward(in.batch, in.params, in.encoder, in.tokens, in.cfg, in.noise);
  const double h = 1e-5;
  std::vector<std::pair<std::string, double>> worst;
  TunerParams probe = in.params;
  std::vector<std::span<double>> blocks;
  std::vector<std::span<const double>> grads;
  probe.for_each_block([&](std::string_view, std::span<double> v, std::size_t, std::size_t) { blocks.push_back(v); });
  fb.grad.for_each_block(
      [&](std::string_view, std::span<const double> v, std::size_t, std::size_t) { grads.push_back(v); });
  double max_rel = 0.0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t i = 0; i < blocks[b].size(); ++i) {
      const double saved = blocks[b][i];
      blocks[b][i] = saved + h;
      const double up = evaluate_loss(in.batch, probe, in.encoder, in.tokens, in.cfg, in.noise).total;
      blocks[b][i] = saved - h;
      const double down = evaluate_loss(in.batch, probe, in.encoder, in.tokens, in.cfg, in.noise).total;
      blocks[b][i] = saved;
      const double num = (up - down) / (2 * h);
      const double a = grads[b][i];
      max_rel = std::max(max_rel, std::fabs(a - num) / std::max({std::fabs(a), std::fabs(num), 1e-6}));
    }
  }
  CHECK(max_rel <= 1e-4);
}

TEST_CASE("forward_backward: zero loss weights leave only the l_id gradient") {
  Instance in;
  in.cfg.alpha = 0.0;
  in.cfg.beta = 0.0;
  const auto fb = forward_backward(in.batch, in.params, in.encoder, in.tokens, in.cfg, in.noise);
  CHECK(fb.loss.total == fb.loss.l_id);
  for (double g : fb.grad.w_it.data()) CHECK(g == 0.0);
  for (double g : fb.grad.w_ti.data()) CHECK(g == 0.0);
}

TEST_CASE("forward_backward: duplicating the batch changes nothing") {
  Instance in;
  std::vector<TrainSample> doubled = in.batch;
  doubled.insert(doubled.end(), in.batch.begin(), in.batch.end());
  const auto a = forward_backward(in.batch, in.params, in.encoder, in.tokens, in.cfg, in.noise);
  const auto b = forward_backward(doubled, in.params, in.encoder, in.tokens, in.cfg, in.noise);
  CHECK(b.loss.total == doctest::Approx(a.loss.total).epsilon(1e-12));
  CHECK(max_abs_diff(a.grad, b.grad) <= 1e-12);
}

TEST_CASE("forward_backward: serial and parallel agree bitwise") {
  Instance in;
  const auto s = forward_backward(in.batch, in.params, in.encoder, in.tokens, in.cfg, in.noise, Exec::serial);
  const auto p = forward_backward(in.batch, in.params, in.encoder, in.tokens, in.cfg, in.noise, Exec::parallel);
  CHECK(s.grad == p.grad);
  CHECK(s.loss.total == p.loss.total);
}

TEST_CASE("identity maps contribute no l_intra") {
  Instance in;
  in.params.w_it = Matrix::identity(5);
  in.params.w_ti = Matrix::identity(5);
  CHECK(evaluate_loss(in.batch, in.params, in.encoder, in.tokens, in.cfg, in.noise).l_intra == 0.0);
}

TEST_CASE("sgd_step: two-step momentum recursion") {
  const TunerDims d{1, 1, 1, 1};
  TunerParams p = TunerParams::zeros(d), g = TunerParams::zeros(d), v = TunerParams::zeros(d);
  fill(p, 1.0);
  fill(g, 2.0);
  sgd_step(p, g, v, 0.1, 0.9);
  CHECK(all_equal(v, 2.0));
  CHECK(max_abs_diff(p, [&] { TunerParams t = TunerParams::zeros(d); fill(t, 0.8); return t; }()) <= 1e-15);
  sgd_step(p, g, v, 0.1, 0.9);
  CHECK(max_abs_diff(v, [&] { TunerParams t = TunerParams::zeros(d); fill(t, 3.8); return t; }()) <= 1e-15);
  CHECK(max_abs_diff(p, [&] { TunerParams t = TunerParams::zeros(d); fill(t, 0.42); return t; }()) <= 1e-15);
}

TEST_CASE("sgd_step: zero gradient and zero momentum") {
  const TunerDims d{2, 2, 1, 2};
  TunerParams p = TunerParams::initial(d, 3), g = TunerParams::zeros(d), v = TunerParams::zeros(d);
  const TunerParams before = p;
  sgd_step(p, g, v, 0.5, 0.9);
  CHECK(p == before);

  fill(g, 1.5);
  fill(v, 100.0);
  sgd_step(p, g, v, 0.1, 0.0);
  TunerParams want = before;
  want.add_scaled(g, -0.1);
  CHECK(max_abs_diff(p, want) <= 1e-15);

  fill(g, std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_AS(sgd_step(p, g, v, 0.1, 0.9), Error);
}

TEST_CASE("training: zero epochs returns the initialization") {
  const FrozenTextEncoder enc(EncoderSpec{5, 8, 8, 12});
  const EmbeddingSet data = small_task(3, enc, 11);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.context_length = 4;
  const TrainResult r = train(data, enc, 11, cfg);
  CHECK(r.model.params == initial_model(data, enc, 11, cfg).params);
  CHECK(r.history.size() == 1);
}

TEST_CASE("training: loss falls and runs are bit-identical") {
  const FrozenTextEncoder enc(EncoderSpec{5, 8, 8, 12});
  const EmbeddingSet data = small_task(3, enc, 11);
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.context_length = 4;
  cfg.batch_size = 8;
  const TrainResult a = train(data, enc, 11, cfg, Exec::parallel);
  const TrainResult b = train(data, enc, 11, cfg, Exec::serial);
  CHECK(a.history.size() == 9);
  CHECK(a.history.back().total < a.history.front().total);
  CHECK(a.model.params == b.model.params);
}

TEST_CASE("training input checks") {
  const FrozenTextEncoder enc(EncoderSpec{5, 8, 8, 12});
  EmbeddingSet data = small_task(3, enc, 11);
  const FrozenTextEncoder wrong(EncoderSpec{5, 8, 8, 7});
  CHECK_THROWS_WITH_AS(train(data, wrong, 11, TrainConfig{}), doctest::Contains("DimMismatch"), Error);
  std::erase_if(data.records, [](const EmbeddingRecord& r) { return r.label == std::optional<std::size_t>{1}; });
  CHECK_THROWS_WITH_AS(train(data, enc, 11, TrainConfig{}), doctest::Contains("EmptyClass"), Error);
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("inference prototypes") {
  const FrozenTextEncoder enc(EncoderSpec{5, 8, 8, 12});
  const EmbeddingSet data = small_task(3, enc, 11);
  TrainConfig cfg;
  cfg.context_length = 3;
  TrainedModel m = initial_model(data, enc, 11, cfg);
  CounterStream rng(1);
  m.params.add_scaled([&] {
    TunerParams t = TunerParams::zeros(m.params.dims());
    t.for_each_block([&](std::string_view, std::span<double> v, std::size_t, std::size_t) {
      for (double& x : v) x = 0.2 * rng.next_normal();
    });
    return t;
  }(), 1.0);
  const auto tokens = m.class_tokens();
  const Vec x = data.records[0].vector;

  const PrototypeSet p = infer_prototypes(m, x, tokens);
  CHECK(p == infer_prototypes(m, x, tokens));
  TrainedModel other_sigma = m;
  for (double& s : other_sigma.params.sigma) s *= 50.0;
  CHECK(infer_prototypes(other_sigma, x, tokens) == p);

  // meta_net -> prompt -> encoder by hand
  Vec mi(8, 0.0);
  for (std::size_t k = 0; k < 8; ++k) {
    double acc = m.params.meta_b2[k];
    for (std::size_t j = 0; j < m.params.meta_b1.size(); ++j) {
      double pre = m.params.meta_b1[j];
      for (std::size_t i = 0; i < x.size(); ++i) pre += m.params.meta_w1(j, i) * x[i];
      acc += m.params.meta_w2(k, j) * std::max(pre, 0.0);
    }
    mi[k] = acc;
  }
  for (std::size_t c = 0; c < tokens.size(); ++c) {
    TokenSequence seq;
    for (std::size_t l = 0; l < 3; ++l) {
      Vec t(8);
      for (std::size_t k = 0; k < 8; ++k) t[k] = m.params.context(l, k) + mi[k] + m.params.mu[k];
      seq.push_back(t);
    }
    seq.push_back(tokens[c]);
    const Vec want = enc.encode(seq);
    for (std::size_t k = 0; k < want.size(); ++k) CHECK(p.vectors[c][k] == doctest::Approx(want[k]).epsilon(1e-12));
  }
}

TEST_CASE("map_image") {
  TrainedModel m;
  m.params = TunerParams::zeros(TunerDims{2, 2, 1, 2});
  m.params.w_it = Matrix::identity(2);
  CHECK(map_image(m, Vec{0.3, -4}) == Vec{0.3, -4});
  m.params.w_it(0, 0) = 0.0;
  m.params.w_it(1, 1) = 0.0;
  m.params.w_it(0, 1) = 1.0;
  m.params.w_it(1, 0) = 1.0;
  CHECK(map_image(m, Vec{1, 2}) == Vec{2, 1});
  const Vec a = {0.5, -1}, b = {3, 0.25};
  const Vec lhs = map_image(m, Vec{2 * a[0] + b[0], 2 * a[1] + b[1]});
  const Vec ma = map_image(m, a), mb = map_image(m, b);
  CHECK(lhs == Vec{2 * ma[0] + mb[0], 2 * ma[1] + mb[1]});
}

TEST_CASE("model files round trip") {
  const FrozenTextEncoder enc(EncoderSpec{5, 8, 8, 12});
  const EmbeddingSet data = small_task(3, enc, 11);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.context_length = 2;
  const TrainedModel m = train(data, enc, 11, cfg).model;
  const auto dir = std::filesystem::temp_directory_path() / "protood_model_rt";
  std::filesystem::create_directories(dir);
  save_model(m, dir / "model.json");
  const TrainedModel back = load_model(dir / "model.json");
  CHECK(back.params == m.params);
  CHECK(back.config == m.config);
  CHECK(back.class_names == m.class_names);
  CHECK(back.encoder.spec() == m.encoder.spec());
  const std::string json1 = read_file(dir / "model.json"), bin1 = read_file(dir / "model.bin");
  save_model(back, dir / "model.json");
  CHECK(read_file(dir / "model.json") == json1);
  CHECK(read_file(dir / "model.bin") == bin1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("gradcheck report") {
  const GradcheckReport r = run_gradcheck(GradcheckConfig{});
  CHECK(r.pass);
  CHECK(r.max_rel_error <= 1e-4);
  CHECK(r.groups.size() == 6);
  CHECK(to_json(r) == to_json(run_gradcheck(GradcheckConfig{})));
  for (const char* group : {"context", "meta", "mu", "sigma", "w_it", "w_ti"}) {
    GradcheckConfig g;
    g.mutate_group = group;
    const GradcheckReport m = run_gradcheck(g);
    CHECK_FALSE(m.pass);
    for (const auto& [name, err] : m.groups) CHECK((name == group ? err > 1e-4 : err <= 1e-4));
  }
}
