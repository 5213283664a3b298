#include "protood/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "protood/error.hpp"
#include "protood/random.hpp"

namespace protood {

namespace {

// Modified Gram-Schmidt over seeded Gaussian draws.
std::vector<Vec> orthonormal_basis(std::size_t count, std::size_t dim, std::uint64_t seed) {
  CounterStream stream(seed);
  std::vector<Vec> basis;
  while (basis.size() < count) {
    Vec v = stream.normal_vector(dim);
    for (const Vec& b : basis) axpy(-dot(v, b), b, v);
    if (l2_norm(v) < 1e-6) continue;
    basis.push_back(unit_normalized(v));
  }
  return basis;
}

EmbeddingSet empty_set(std::size_t dim, std::size_t classes) {
  EmbeddingSet set;
  set.dim = dim;
  set.class_names = default_class_names(classes);
  set.modality = Modality::image;
  set.normalized = true;
  return set;
}

Vec noisy_unit(const Vec& center, double eps, CounterStream& stream) {
  Vec v = center;
  for (double& x : v) x += eps * stream.next_normal();
  return unit_normalized(v);
}

void fill_labeled(EmbeddingSet& set, const std::vector<Vec>& centers, std::size_t per_class, double eps,
                  std::uint64_t seed) {
  CounterStream stream(seed);
  for (std::size_t c = 0; c < centers.size(); ++c)
    for (std::size_t k = 0; k < per_class; ++k) push_record(set, noisy_unit(centers[c], eps, stream), c);
}

PrototypeSet make_protos(Modality modality, std::vector<Vec> vectors) {
  PrototypeSet p;
  p.modality = modality;
  p.dim = vectors.front().size();
  p.normalized = true;
  p.class_names = default_class_names(vectors.size());
  p.vectors = std::move(vectors);
  return p;
}

// Mean over all pairs of unit vectors drawn one from each list; for a single
// list, over distinct pairs. Uses |sum x|^2 identities, exact up to rounding.
double mean_pair_cosine(const std::vector<const Vec*>& a, const std::vector<const Vec*>& b, bool same) {
  const std::size_t dim = a.front()->size();
  Vec sa(dim, 0.0), sb(dim, 0.0);
  for (const Vec* v : a) axpy(1.0, *v, sa);
  for (const Vec* v : b) axpy(1.0, *v, sb);
  if (same) {
    double self = 0.0;
    for (const Vec* v : a) self += dot(*v, *v);
    const double n = static_cast<double>(a.size());
    return (dot(sa, sa) - self) / (n * (n - 1.0));
  }
  return dot(sa, sb) / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

struct TrialOutcome {
  double delta_mmp = 0.0;
  double delta_mcm = 0.0;
  double max_gap = 0.0;
  AssumptionReport assumptions;
};

TrialOutcome run_trial(const SynthConfig& cfg, std::size_t trial, const ScoreConfig& score_cfg) {
  SynthConfig local = cfg;
  local.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(trial));
  const World world = generate_world(local);
  TrialOutcome out;
  out.assumptions = check_assumptions(world);

  auto mean_scores = [&](const EmbeddingSet& set, double& mmp, double& mcm) {
    double sum_mmp = 0.0, sum_mcm = 0.0;
    for (const auto& r : set.records) {
      const double s_mcm = mcm_score(r.vector, world.text_protos, score_cfg);
      const double s_mmp = mmp_score(r.vector, world.text_protos, world.image_protos, score_cfg);
      out.max_gap = std::max(out.max_gap, std::abs(s_mmp - s_mcm));
      sum_mmp += s_mmp;
      sum_mcm += s_mcm;
    }
    mmp = sum_mmp / static_cast<double>(set.size());
    mcm = sum_mcm / static_cast<double>(set.size());
  };
  double id_mmp, id_mcm, ood_mmp, ood_mcm;
  mean_scores(world.test, id_mmp, id_mcm);
  mean_scores(world.ood, ood_mmp, ood_mcm);
  out.delta_mmp = id_mmp - ood_mmp;
  out.delta_mcm = id_mcm - ood_mcm;
  return out;
}

void mean_and_stderr(const std::vector<double>& xs, double& mean, double& se) {
  const double n = static_cast<double>(xs.size());
  double sum = 0.0;
  for (double x : xs) sum += x;
  mean = sum / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  se = xs.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
}

}  // namespace

void SynthConfig::validate() const {
  require(classes >= 1, ErrorKind::BadConfig, "classes must be positive");
  require(dim >= classes + 1, ErrorKind::BadConfig, "dim must be at least classes + 1");
  require(n_per_class_train > 0 && n_per_class_test > 0 && n_ood > 0, ErrorKind::BadConfig,
          "sample counts must be positive");
  require(noise_scale >= 0.0 && std::isfinite(noise_scale), ErrorKind::BadConfig, "noise_scale must be non-negative");
  require(gap >= 0.0 && gap <= 1.0, ErrorKind::BadConfig, "gap must be in [0, 1]");
}

World generate_world(const SynthConfig& cfg) {
  cfg.validate();
  const std::vector<Vec> basis = orthonormal_basis(cfg.classes + 1, cfg.dim, derive_seed(cfg.seed, "world.basis"));
  std::vector<Vec> image(basis.begin(), basis.begin() + static_cast<std::ptrdiff_t>(cfg.classes));
  const Vec& anchor = basis.back();

  std::vector<Vec> text;
  for (const Vec& p : image) {
    Vec t(cfg.dim);
    for (std::size_t i = 0; i < cfg.dim; ++i) t[i] = (1.0 - cfg.gap) * p[i] + cfg.gap * anchor[i];
    text.push_back(unit_normalized(t));
  }

  World world;
  world.gap = cfg.gap;
  world.train = empty_set(cfg.dim, cfg.classes);
  world.test = empty_set(cfg.dim, cfg.classes);
  world.ood = empty_set(cfg.dim, cfg.classes);
  fill_labeled(world.train, image, cfg.n_per_class_train, cfg.noise_scale, derive_seed(cfg.seed, "world.train"));
  fill_labeled(world.test, image, cfg.n_per_class_test, cfg.noise_scale, derive_seed(cfg.seed, "world.test"));

  const Vec centroid = unit_normalized(mean_of(image));
  CounterStream ood_stream(derive_seed(cfg.seed, "world.ood"));
  for (std::size_t k = 0; k < cfg.n_ood; ++k)
    push_record(world.ood, noisy_unit(centroid, cfg.noise_scale, ood_stream), std::nullopt);

  world.image_protos = make_protos(Modality::image, std::move(image));
  world.text_protos = make_protos(Modality::text, std::move(text));
  return world;
}

AssumptionReport check_assumptions(const World& world) {
  const std::size_t classes = world.image_protos.class_count();
  AssumptionReport r;

  std::vector<std::vector<const Vec*>> by_class(classes);
  double own_image = 0.0, own_text = 0.0;
  std::size_t labeled = 0;
  for (const auto& rec : world.test.records) {
    if (!rec.label) continue;
    by_class[*rec.label].push_back(&rec.vector);
    own_image += cosine(rec.vector, world.image_protos.vectors[*rec.label]);
    own_text += cosine(rec.vector, world.text_protos.vectors[*rec.label]);
    ++labeled;
  }
  require(labeled > 0, ErrorKind::NoLabels, "world has no labeled test records");
  r.a2_margin = (own_image - own_text) / static_cast<double>(labeled);
  r.a2_pass = world.gap > 0.0 ? r.a2_margin > 0.0 : r.a2_margin == 0.0;

  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t a = 0; a < classes; ++a) {
    if (by_class[a].size() >= 2) {
      intra += mean_pair_cosine(by_class[a], by_class[a], true);
      ++n_intra;
    }
    for (std::size_t b = a + 1; b < classes; ++b) {
      if (by_class[a].empty() || by_class[b].empty()) continue;
      inter += mean_pair_cosine(by_class[a], by_class[b], false);
      ++n_inter;
    }
  }
  r.a3_margin = (n_intra ? intra / static_cast<double>(n_intra) : 0.0) -
                (n_inter ? inter / static_cast<double>(n_inter) : 0.0);
  r.a3_pass = r.a3_margin > 0.0;

  require(!world.ood.records.empty(), ErrorKind::EmptyInput, "world has no OOD records");
  for (const PrototypeSet* protos : {&world.image_protos, &world.text_protos}) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const Vec& p : protos->vectors) {
      double sum = 0.0;
      for (const auto& rec : world.ood.records) sum += cosine(rec.vector, p);
      const double m = sum / static_cast<double>(world.ood.size());
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
    r.a4_spread = std::max(r.a4_spread, hi - lo);
  }
  r.a4_pass = r.a4_spread <= kMaxOodSpread;
  return r;
}

TheoremReport verify_theorem(const SynthConfig& cfg, std::size_t trials, const ScoreConfig& score_cfg, Exec exec) {
  cfg.validate();
  score_cfg.validate();
  require(trials >= kMinTheoremTrials, ErrorKind::BadConfig,
          "verify_theorem needs at least " + std::to_string(kMinTheoremTrials) + " trials");

  std::vector<TrialOutcome> outcomes(trials);
  parallel_for(trials, exec, [&](std::size_t t) { outcomes[t] = run_trial(cfg, t, score_cfg); });

  TheoremReport report;
  report.trials = trials;
  report.tau = score_cfg.tau;
  std::vector<double> mmp, mcm;
  report.a2_margin_min = std::numeric_limits<double>::infinity();
  report.a3_margin_min = std::numeric_limits<double>::infinity();
  report.assumptions_pass = true;
  for (const auto& o : outcomes) {
    mmp.push_back(o.delta_mmp);
    mcm.push_back(o.delta_mcm);
    report.max_samplewise_gap = std::max(report.max_samplewise_gap, o.max_gap);
    report.a2_margin_min = std::min(report.a2_margin_min, o.assumptions.a2_margin);
    report.a3_margin_min = std::min(report.a3_margin_min, o.assumptions.a3_margin);
    report.a4_spread_max = std::max(report.a4_spread_max, o.assumptions.a4_spread);
    report.assumptions_pass = report.assumptions_pass && o.assumptions.pass();
  }
  mean_and_stderr(mmp, report.delta_mmp, report.stderr_mmp);
  mean_and_stderr(mcm, report.delta_mcm, report.stderr_mcm);
  const double combined = std::sqrt(report.stderr_mmp * report.stderr_mmp + report.stderr_mcm * report.stderr_mcm);
  report.pass = report.delta_mmp >= report.delta_mcm - 2.0 * combined;
  return report;
}

std::string to_json(const TheoremReport& r) {
  nlohmann::ordered_json j;
  j["delta_mmp"] = r.delta_mmp;
  j["delta_mcm"] = r.delta_mcm;
  j["stderr_mmp"] = r.stderr_mmp;
  j["stderr_mcm"] = r.stderr_mcm;
  j["trials"] = r.trials;
  j["pass"] = r.pass;
  j["tau"] = r.tau;
  j["max_samplewise_gap"] = r.max_samplewise_gap;
  j["assumptions"] = {{"a2_margin_min", r.a2_margin_min},
                      {"a3_margin_min", r.a3_margin_min},
                      {"a4_spread_max", r.a4_spread_max},
                      {"pass", r.assumptions_pass}};
  return j.dump(2) + "\n";
}

World generate_tuning_task(const TuningTaskConfig& cfg, const FrozenTextEncoder& encoder,
                           std::uint64_t class_token_seed) {
  require(cfg.classes >= 2 && cfg.ood_classes >= 1, ErrorKind::BadConfig, "tuning task needs classes");
  require(cfg.n_per_class_train > 0 && cfg.n_per_class_test > 0 && cfg.n_ood > 0, ErrorKind::BadConfig,
          "sample counts must be positive");
  require(cfg.noise_scale >= 0.0, ErrorKind::BadConfig, "noise_scale must be non-negative");
  const std::size_t total = cfg.classes + cfg.ood_classes;
  const std::vector<Vec> tokens = make_class_tokens(class_token_seed, total, encoder.token_dim());
  const TokenSequence zero_template(cfg.context_length, Vec(encoder.token_dim(), 0.0));
  const PrototypeSet zero_shot = text_prototypes_zero_shot(encoder, tokens, zero_template);

  std::vector<Vec> id_text(zero_shot.vectors.begin(),
                           zero_shot.vectors.begin() + static_cast<std::ptrdiff_t>(cfg.classes));
  const Vec centroid = mean_of(id_text);
  std::vector<Vec> centers;
  for (const Vec& p : zero_shot.vectors) {
    Vec v = p;
    axpy(-1.0, centroid, v);
    centers.push_back(unit_normalized(v));
  }
  std::vector<Vec> id_centers(centers.begin(), centers.begin() + static_cast<std::ptrdiff_t>(cfg.classes));

  const std::size_t dim = encoder.output_dim();
  World world;
  world.train = empty_set(dim, cfg.classes);
  world.test = empty_set(dim, cfg.classes);
  world.ood = empty_set(dim, cfg.classes);
  fill_labeled(world.train, id_centers, cfg.n_per_class_train, cfg.noise_scale, derive_seed(cfg.seed, "task.train"));
  fill_labeled(world.test, id_centers, cfg.n_per_class_test, cfg.noise_scale, derive_seed(cfg.seed, "task.test"));
  CounterStream ood_stream(derive_seed(cfg.seed, "task.ood"));
  for (std::size_t k = 0; k < cfg.n_ood; ++k)
    push_record(world.ood, noisy_unit(centers[cfg.classes + k % cfg.ood_classes], cfg.noise_scale, ood_stream),
                std::nullopt);

  world.image_protos = make_protos(Modality::image, std::move(id_centers));
  PrototypeSet text = zero_shot;
  text.vectors.resize(cfg.classes);
  text.class_names.resize(cfg.classes);
  world.text_protos = std::move(text);
  world.gap = l2_norm(centroid);
  return world;
}

}  // namespace protood
