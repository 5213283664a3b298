#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "protood/batch_scoring.hpp"
#include "protood/embedding_store.hpp"
#include "protood/error.hpp"
#include "protood/gradcheck.hpp"
#include "protood/metrics.hpp"
#include "protood/prototypes.hpp"
#include "protood/run_config.hpp"
#include "protood/synth.hpp"
#include "protood/text_format.hpp"
#include "protood/tuner.hpp"

namespace fs = std::filesystem;
using namespace protood;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAssertion = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IoError:
    case ErrorKind::BadMagic:
    case ErrorKind::BadHeader:
      return kExitIo;
    default:
      return kExitUsage;
  }
}

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

// Config file plus one override flag per key (--learning-rate 0.01, ...).
struct ConfigOptions {
  std::string path;
  std::map<std::string, std::string> overrides;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* app) {
    app->add_option("--config", path, "JSON run configuration");
    for (const auto& key : RunConfig::keys())
      options[key] = app->add_option("--" + dashed(key), overrides[key], "override config key '" + key + "'");
  }

  RunConfig resolve() const {
    RunConfig cfg = path.empty() ? RunConfig{} : RunConfig::from_file(path);
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) cfg.set(key, overrides.at(key));
    return cfg;
  }
};

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_file(out_path, text);
  }
}

fs::path require_directory(const std::string& dir) {
  require(!dir.empty(), ErrorKind::BadConfig, "an output directory is required");
  require(fs::is_directory(dir), ErrorKind::IoError, "output directory '" + dir + "' does not exist");
  return fs::path(dir);
}

std::string dump_json(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

int cmd_gen(const ConfigOptions& copts, const std::string& out_dir_flag) {
  const RunConfig cfg = copts.resolve();
  const fs::path dir = require_directory(out_dir_flag.empty() ? cfg.output_dir : out_dir_flag);

  World world;
  if (cfg.world == "theorem") {
    world = generate_world(cfg.synth());
  } else if (cfg.world == "tuning") {
    const FrozenTextEncoder encoder(cfg.encoder(cfg.dim));
    world = generate_tuning_task(cfg.tuning_task(), encoder, cfg.class_token_seed());
  } else {
    throw Error(ErrorKind::BadConfig, "world must be 'theorem' or 'tuning', got '" + cfg.world + "'");
  }

  save_embedding_set(world.train, dir / "train.oodemb");
  save_embedding_set(world.test, dir / "test.oodemb");
  save_embedding_set(world.ood, dir / "ood.oodemb");
  save_embedding_set(to_embedding_set(world.image_protos), dir / "image_prototypes.oodemb");
  save_embedding_set(to_embedding_set(world.text_protos), dir / "text_prototypes.oodemb");
  write_file(dir / "config.json", dump_json(cfg.to_json()));
  std::cout << "wrote " << world.train.size() << " train, " << world.test.size() << " test, " << world.ood.size()
            << " ood records to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_prototypes(const std::string& in, const std::string& out, bool raw) {
  const EmbeddingSet base = load_embedding_set(in);
  const PrototypeSet protos = compute_image_prototypes(base, !raw);
  save_embedding_set(to_embedding_set(protos), out);
  return kExitOk;
}

struct ScoreOptions {
  std::string embeddings, text_protos, image_protos, model, mapped, kind = "mcm", condition = "image", out;
  double tau = 0.01;
};

int cmd_score(const ScoreOptions& o) {
  const EmbeddingSet set = load_embedding_set(o.embeddings);

  ScoringInputs inputs;
  inputs.kind = score_kind_from_string(o.kind);
  inputs.cfg = ScoreConfig{o.tau};

  std::optional<PrototypeSet> text, image;
  std::optional<std::vector<Vec>> mapped;
  std::optional<TrainedModel> model;
  if (!o.text_protos.empty()) text = prototypes_from_set(load_embedding_set(o.text_protos));
  if (!o.image_protos.empty()) image = prototypes_from_set(load_embedding_set(o.image_protos));
  if (!o.mapped.empty()) {
    const EmbeddingSet m = load_embedding_set(o.mapped);
    require(m.size() == set.size(), ErrorKind::LengthMismatch, "mapped embedding file must have one record per input");
    mapped = m.vectors();
  }
  if (!o.model.empty()) model = load_model(o.model);

  if (text) inputs.text = &*text;
  if (image) inputs.image = &*image;
  if (mapped) inputs.mapped = &*mapped;
  if (model) inputs.model = &*model;

  if (o.condition == "mean") {
    require(set.size() > 0, ErrorKind::EmptyInput, "cannot condition on the mean of an empty set");
    const std::vector<Vec> vs = set.vectors();
    inputs.conditioning = mean_of(vs);
  } else {
    require(o.condition == "image", ErrorKind::BadConfig, "--condition must be 'image' or 'mean'");
  }

  emit(score_csv(score_records(set, inputs)), o.out);
  return kExitOk;
}

struct EvalOptions {
  std::string id, ood, kind, labels, out, ecdf_dir;
};

std::vector<ScoreRow> load_scores(const std::string& path, const std::string& kind) {
  std::vector<ScoreRow> rows = parse_score_csv(read_file(path));
  if (!kind.empty()) {
    const ScoreKind k = score_kind_from_string(kind);
    std::erase_if(rows, [k](const ScoreRow& r) { return r.kind != k; });
  }
  for (const auto& r : rows)
    require(r.kind == rows.front().kind, ErrorKind::BadConfig,
            "'" + path + "' mixes score kinds; select one with --kind");
  return rows;
}

std::vector<double> score_column(const std::vector<ScoreRow>& rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.score);
  return out;
}

int cmd_eval(const EvalOptions& o) {
  const std::vector<ScoreRow> id_rows = load_scores(o.id, o.kind);
  const std::vector<ScoreRow> ood_rows = load_scores(o.ood, o.kind);
  const std::vector<double> id = score_column(id_rows);
  const std::vector<double> ood = score_column(ood_rows);

  EvalReport report = evaluate_scores(id, ood);
  if (!o.labels.empty()) {
    const EmbeddingSet labelled = load_embedding_set(o.labels);
    require(labelled.size() == id_rows.size(), ErrorKind::LengthMismatch,
            "label file must have one record per ID score row");
    std::vector<std::size_t> predictions, labels;
    for (std::size_t i = 0; i < id_rows.size(); ++i) {
      require(labelled.records[i].label.has_value(), ErrorKind::NoLabels, "label file has an unlabelled record");
      predictions.push_back(id_rows[i].predicted_class);
      labels.push_back(*labelled.records[i].label);
    }
    report.top1 = top1_accuracy(predictions, labels);
  }
  if (!o.ecdf_dir.empty()) {
    const fs::path dir = require_directory(o.ecdf_dir);
    ecdf_export(id, dir / "ecdf_id.csv");
    ecdf_export(ood, dir / "ecdf_ood.csv");
  }
  emit(to_json(report), o.out);
  return kExitOk;
}

int cmd_train(const ConfigOptions& copts, const std::string& train_path, const std::string& out_dir_flag) {
  const RunConfig cfg = copts.resolve();
  const fs::path dir = require_directory(out_dir_flag.empty() ? cfg.output_dir : out_dir_flag);
  const EmbeddingSet train_set = load_embedding_set(train_path);
  const FrozenTextEncoder encoder(cfg.encoder(train_set.dim));

  const TrainResult result = train(train_set, encoder, cfg.class_token_seed(), cfg.train());
  for (std::size_t e = 0; e < result.history.size(); ++e) {
    const LossBreakdown& l = result.history[e];
    std::cout << "epoch " << e << " total=" << format_double(l.total) << " l_id=" << format_double(l.l_id)
              << " l_inter=" << format_double(l.l_inter) << " l_intra=" << format_double(l.l_intra)
              << " l_bias=" << format_double(l.l_bias) << "\n";
  }
  save_model(result.model, dir / "model.json");
  write_file(dir / "loss_history.csv", loss_history_csv(result.history));
  return kExitOk;
}

int cmd_verify_theorem(const ConfigOptions& copts, const std::string& out) {
  const RunConfig cfg = copts.resolve();
  const TheoremReport report = verify_theorem(cfg.synth(), cfg.trials, cfg.theorem_score());
  emit(to_json(report), out);
  return report.pass && report.assumptions_pass ? kExitOk : kExitAssertion;
}

int cmd_gradcheck(const ConfigOptions& copts, const std::string& mutate, const std::string& out) {
  const RunConfig cfg = copts.resolve();
  GradcheckConfig g = cfg.gradcheck();
  if (!mutate.empty()) g.mutate_group = mutate;
  const GradcheckReport report = run_gradcheck(g);
  emit(to_json(report), out);
  return report.pass ? kExitOk : kExitAssertion;
}

int cmd_gap(const std::string& a, const std::string& b, bool normalize, const std::string& out) {
  EmbeddingSet sa = load_embedding_set(a);
  EmbeddingSet sb = load_embedding_set(b);
  if (normalize) {
    sa = normalize_set(sa);
    sb = normalize_set(sb);
  }
  const std::vector<Vec> va = sa.vectors();
  const std::vector<Vec> vb = sb.vectors();
  nlohmann::ordered_json j;
  j["gap_norm"] = modality_gap_norm(va, vb);
  emit(dump_json(j), out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal prototype OOD detection toolkit"};
  app.require_subcommand(1);

  ConfigOptions gen_cfg, train_cfg, theorem_cfg, grad_cfg;
  std::string gen_out, train_in, train_out, theorem_out, grad_mutate, grad_out;

  auto* gen = app.add_subcommand("gen", "generate a synthetic world as OODEMB1 files");
  gen_cfg.attach(gen);
  gen->add_option("--out-dir", gen_out, "existing output directory");

  std::string proto_in, proto_out;
  bool proto_raw = false;
  auto* proto = app.add_subcommand("prototypes", "class-mean image prototypes");
  proto->add_option("--in", proto_in, "labelled image embeddings")->required();
  proto->add_option("--out", proto_out, "prototype file")->required();
  proto->add_flag("--raw", proto_raw, "keep the unnormalized class means");

  ScoreOptions so;
  auto* score = app.add_subcommand("score", "score embeddings with S_MCM, S_MMP or S_GMP");
  score->add_option("--embeddings", so.embeddings, "image embeddings to score")->required();
  score->add_option("--text-protos", so.text_protos, "text prototype file");
  score->add_option("--image-protos", so.image_protos, "image prototype file");
  score->add_option("--model", so.model, "trained model manifest (model.json)");
  score->add_option("--mapped", so.mapped, "precomputed mapped embeddings, one per record");
  score->add_option("--kind", so.kind, "mcm | mmp | gmp")->check(CLI::IsMember({"mcm", "mmp", "gmp"}));
  score->add_option("--tau", so.tau, "softmax temperature");
  score->add_option("--condition", so.condition, "prompt conditioning: image | mean")
      ->check(CLI::IsMember({"image", "mean"}));
  score->add_option("--out", so.out, "CSV output path (default stdout)");

  EvalOptions eo;
  auto* eval = app.add_subcommand("eval", "FPR95 / AUROC / KS over ID and OOD score files");
  eval->add_option("--id", eo.id, "ID score CSV")->required();
  eval->add_option("--ood", eo.ood, "OOD score CSV")->required();
  eval->add_option("--kind", eo.kind, "only use rows of this score kind");
  eval->add_option("--labels", eo.labels, "labelled ID embeddings for top-1 accuracy");
  eval->add_option("--out", eo.out, "report JSON path (default stdout)");
  eval->add_option("--ecdf-dir", eo.ecdf_dir, "write ecdf_id.csv and ecdf_ood.csv here");

  auto* trn = app.add_subcommand("train", "few-shot prompt tuning");
  train_cfg.attach(trn);
  trn->add_option("--train", train_in, "labelled training embeddings")->required();
  trn->add_option("--out-dir", train_out, "existing output directory");

  auto* theorem = app.add_subcommand("verify-theorem", "Monte-Carlo check of the MMP separation theorem");
  theorem_cfg.attach(theorem);
  theorem->add_option("--out", theorem_out, "report JSON path (default stdout)");

  auto* grad = app.add_subcommand("gradcheck", "analytic vs central-difference gradients");
  grad_cfg.attach(grad);
  grad->add_option("--mutate", grad_mutate, "perturb one group's analytic gradient")
      ->check(CLI::IsMember({"context", "meta", "mu", "sigma", "w_it", "w_ti"}));
  grad->add_option("--out", grad_out, "report JSON path (default stdout)");

  std::string gap_a, gap_b, gap_out;
  bool gap_normalize = false;
  auto* gap = app.add_subcommand("gap", "modality gap norm between two embedding files");
  gap->add_option("--a", gap_a, "first embedding file")->required();
  gap->add_option("--b", gap_b, "second embedding file")->required();
  gap->add_flag("--normalize", gap_normalize, "unit-normalize both sets first");
  gap->add_option("--out", gap_out, "JSON output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(gen_cfg, gen_out);
    if (*proto) return cmd_prototypes(proto_in, proto_out, proto_raw);
    if (*score) return cmd_score(so);
    if (*eval) return cmd_eval(eo);
    if (*trn) return cmd_train(train_cfg, train_in, train_out);
    if (*theorem) return cmd_verify_theorem(theorem_cfg, theorem_out);
    if (*grad) return cmd_gradcheck(grad_cfg, grad_mutate, grad_out);
    if (*gap) return cmd_gap(gap_a, gap_b, gap_normalize, gap_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
