#include "protood/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "protood/embedding_store.hpp"
#include "protood/error.hpp"
#include "protood/text_format.hpp"

namespace protood {

namespace {

void require_nonempty(std::span<const double> a, std::span<const double> b) {
  require(!a.empty() && !b.empty(), ErrorKind::EmptyInput, "score lists must be non-empty");
}

std::vector<double> sorted(std::span<const double> xs) {
  std::vector<double> v(xs.begin(), xs.end());
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

FprAtTpr fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores, double tpr_level) {
  require_nonempty(id_scores, ood_scores);
  require(tpr_level > 0.0 && tpr_level <= 1.0, ErrorKind::BadConfig, "tpr_level must be in (0, 1]");
  const auto id = sorted(id_scores);
  const auto ood = sorted(ood_scores);
  const double n_id = static_cast<double>(id.size());

  // Walk distinct ID values from the top; the first one reaching the TPR is
  // the largest admissible threshold.
  double threshold = id.front();
  for (std::size_t end = id.size(); end > 0;) {
    const double t = id[end - 1];
    const std::size_t first = static_cast<std::size_t>(std::lower_bound(id.begin(), id.end(), t) - id.begin());
    const std::size_t at_or_above = id.size() - first;
    if (static_cast<double>(at_or_above) / n_id >= tpr_level) {
      threshold = t;
      break;
    }
    end = first;
  }
  const auto ood_first = std::lower_bound(ood.begin(), ood.end(), threshold);
  const auto ood_at_or_above = static_cast<std::size_t>(ood.end() - ood_first);
  return {static_cast<double>(ood_at_or_above) / static_cast<double>(ood.size()), threshold};
}

std::size_t auroc_doubled_pair_count(std::span<const double> id_scores, std::span<const double> ood_scores) {
  require_nonempty(id_scores, ood_scores);
  const auto ood = sorted(ood_scores);
  std::size_t doubled = 0;
  for (double x : id_scores) {
    const auto lo = std::lower_bound(ood.begin(), ood.end(), x);
    const auto hi = std::upper_bound(lo, ood.end(), x);
    doubled += 2 * static_cast<std::size_t>(lo - ood.begin()) + static_cast<std::size_t>(hi - lo);
  }
  return doubled;
}

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  const std::size_t doubled = auroc_doubled_pair_count(id_scores, ood_scores);
  const std::size_t pairs2 = 2 * id_scores.size() * ood_scores.size();
  if (2 * doubled <= pairs2) return static_cast<double>(doubled) / static_cast<double>(pairs2);
  return 1.0 - static_cast<double>(pairs2 - doubled) / static_cast<double>(pairs2);
}

double ks_statistic(std::span<const double> id_scores, std::span<const double> ood_scores) {
  require_nonempty(id_scores, ood_scores);
  const auto id = sorted(id_scores);
  const auto ood = sorted(ood_scores);
  const double n_id = static_cast<double>(id.size());
  const double n_ood = static_cast<double>(ood.size());
  double best = 0.0;
  std::size_t i = 0, j = 0;
  while (i < id.size() || j < ood.size()) {
    double x;
    if (j == ood.size() || (i < id.size() && id[i] <= ood[j]))
      x = id[i];
    else
      x = ood[j];
    while (i < id.size() && id[i] <= x) ++i;
    while (j < ood.size() && ood[j] <= x) ++j;
    best = std::max(best, std::abs(static_cast<double>(i) / n_id - static_cast<double>(j) / n_ood));
  }
  return best;
}

double top1_accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
  require(predictions.size() == labels.size(), ErrorKind::LengthMismatch, "predictions and labels differ in length");
  require(!predictions.empty(), ErrorKind::EmptyInput, "no predictions");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double modality_gap_norm(std::span<const Vec> set_a, std::span<const Vec> set_b) {
  require(!set_a.empty() && !set_b.empty(), ErrorKind::EmptyInput, "gap needs two non-empty sets");
  const Vec a = mean_of(set_a);
  const Vec b = mean_of(set_b);
  require(a.size() == b.size(), ErrorKind::DimMismatch, "sets differ in dimension");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sum);
}

std::vector<EcdfPoint> ecdf(std::span<const double> scores) {
  require(!scores.empty(), ErrorKind::EmptyInput, "no scores");
  const auto s = sorted(scores);
  const double n = static_cast<double>(s.size());
  std::vector<EcdfPoint> out;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i + 1 == s.size() || s[i + 1] != s[i]) out.push_back({s[i], static_cast<double>(i + 1) / n});
  return out;
}

std::string ecdf_csv(std::span<const double> scores) {
  std::ostringstream out;
  out << "score,cumulative\n";
  for (const auto& p : ecdf(scores)) out << format_double(p.score) << ',' << format_double(p.cumulative) << '\n';
  return out.str();
}

void ecdf_export(std::span<const double> scores, const std::filesystem::path& path) {
  write_file(path, ecdf_csv(scores));
}

EvalReport evaluate_scores(std::span<const double> id_scores, std::span<const double> ood_scores) {
  EvalReport r;
  const FprAtTpr f = fpr_at_tpr(id_scores, ood_scores, 0.95);
  r.fpr95 = f.fpr;
  r.threshold_used = f.threshold;
  r.auroc = auroc(id_scores, ood_scores);
  r.ks = ks_statistic(id_scores, ood_scores);
  return r;
}

std::string to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["fpr95"] = report.fpr95;
  j["auroc"] = report.auroc;
  j["ks"] = report.ks;
  j["top1"] = report.top1 ? nlohmann::ordered_json(*report.top1) : nlohmann::ordered_json(nullptr);
  j["gap_norm"] = report.gap_norm ? nlohmann::ordered_json(*report.gap_norm) : nlohmann::ordered_json(nullptr);
  j["threshold_used"] = report.threshold_used;
  return j.dump(2) + "\n";
}

}  // namespace protood
