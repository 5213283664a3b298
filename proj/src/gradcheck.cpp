#include "protood/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "protood/error.hpp"
#include "protood/random.hpp"

namespace protood {

GradcheckReport run_gradcheck(const GradcheckConfig& cfg) {
  require(cfg.step > 0.0 && cfg.batch > 0 && cfg.classes > 0, ErrorKind::BadConfig, "bad gradcheck config");
  const FrozenTextEncoder encoder(
      EncoderSpec{derive_seed(cfg.seed, "gradcheck.encoder"), cfg.token_dim, cfg.token_dim, cfg.dim});
  const std::vector<Vec> tokens =
      make_class_tokens(derive_seed(cfg.seed, "gradcheck.tokens"), cfg.classes, cfg.token_dim);

  TrainConfig train_cfg;
  train_cfg.context_length = cfg.context_length;
  train_cfg.tau = cfg.tau;
  train_cfg.alpha = cfg.alpha;
  train_cfg.beta = cfg.beta;
  train_cfg.seed = cfg.seed;

  const TunerDims dims{cfg.dim, cfg.token_dim, cfg.context_length, default_meta_hidden(cfg.dim)};
  TunerParams params = TunerParams::initial(dims, derive_seed(cfg.seed, "gradcheck.init"));
  CounterStream perturb(derive_seed(cfg.seed, "gradcheck.perturb"));
  params.for_each_block([&](std::string_view, std::span<double> b, std::size_t, std::size_t) {
    for (double& x : b) x += 0.3 * perturb.next_normal();
  });

  CounterStream data(derive_seed(cfg.seed, "gradcheck.data"));
  std::vector<TrainSample> batch;
  for (std::size_t i = 0; i < cfg.batch; ++i) batch.push_back({unit_normalized(data.normal_vector(cfg.dim)), i % cfg.classes});
  const Vec noise = data.normal_vector(cfg.token_dim);

  ForwardBackward fb = forward_backward(batch, params, encoder, tokens, train_cfg, noise, Exec::serial);
  if (cfg.mutate_group) {
    bool found = false;
    fb.grad.for_each_block([&](std::string_view name, std::span<double> b, std::size_t, std::size_t) {
      if (block_group(name) != *cfg.mutate_group) return;
      found = true;
      for (double& x : b) x *= 1.001;
    });
    require(found, ErrorKind::BadConfig, "unknown gradient group '" + *cfg.mutate_group + "'");
  }

  std::vector<std::span<const double>> analytic;
  fb.grad.for_each_block([&](std::string_view, std::span<const double> b, std::size_t, std::size_t) { analytic.push_back(b); });

  GradcheckReport report;
  report.tolerance = cfg.tolerance;
  report.parameters = params.parameter_count();
  std::size_t k = 0;
  params.for_each_block([&](std::string_view name, std::span<double> block, std::size_t, std::size_t) {
    double worst = 0.0;
    for (std::size_t i = 0; i < block.size(); ++i) {
      const double saved = block[i];
      block[i] = saved + cfg.step;
      const double up = evaluate_loss(batch, params, encoder, tokens, train_cfg, noise).total;
      block[i] = saved - cfg.step;
      const double down = evaluate_loss(batch, params, encoder, tokens, train_cfg, noise).total;
      block[i] = saved;
      const double numeric = (up - down) / (2.0 * cfg.step);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), kGradcheckFloor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    const std::string group(block_group(name));
    if (report.groups.empty() || report.groups.back().first != group)
      report.groups.emplace_back(group, worst);
    else
      report.groups.back().second = std::max(report.groups.back().second, worst);
    report.max_rel_error = std::max(report.max_rel_error, worst);
    ++k;
  });
  report.pass = report.max_rel_error <= cfg.tolerance;
  return report;
}

std::string to_json(const GradcheckReport& report) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json groups;
  for (const auto& [name, err] : report.groups) groups[name] = err;
  j["groups"] = groups;
  j["max_rel_error"] = report.max_rel_error;
  j["tolerance"] = report.tolerance;
  j["parameters"] = report.parameters;
  j["pass"] = report.pass;
  return j.dump(2) + "\n";
}

}  // namespace protood
