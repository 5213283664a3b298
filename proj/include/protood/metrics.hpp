#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protood/linalg.hpp"

namespace protood {

struct FprAtTpr {
  double fpr = 0.0;
  double threshold = 0.0;
};

// Threshold t is the largest ID score with fraction{id >= t} >= tpr_level;
// fpr is fraction{ood >= t}.
FprAtTpr fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores, double tpr_level = 0.95);

// Mann-Whitney statistic: 2 * sum over (id, ood) pairs of [id > ood] + [id == ood] / 2,
// kept as an integer so it is exact.
std::size_t auroc_doubled_pair_count(std::span<const double> id_scores, std::span<const double> ood_scores);

// Probability that an ID score beats an OOD score, ties counted half. With
// U the pair count and N the number of pairs, reports U/N when U <= N/2 and
// 1 - (N-U)/N otherwise, so auroc(a, b) + auroc(b, a) == 1 exactly.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

// sup_x |ECDF_id(x) - ECDF_ood(x)| over the pooled sample points.
double ks_statistic(std::span<const double> id_scores, std::span<const double> ood_scores);

double top1_accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);

// l2 distance between the centroids of two vector sets.
double modality_gap_norm(std::span<const Vec> set_a, std::span<const Vec> set_b);

struct EcdfPoint {
  double score = 0.0;
  double cumulative = 0.0;
};

// One point per distinct score, ascending.
std::vector<EcdfPoint> ecdf(std::span<const double> scores);
std::string ecdf_csv(std::span<const double> scores);
void ecdf_export(std::span<const double> scores, const std::filesystem::path& path);

struct EvalReport {
  double fpr95 = 0.0;
  double auroc = 0.0;
  double ks = 0.0;
  std::optional<double> top1;
  std::optional<double> gap_norm;
  double threshold_used = 0.0;
};

EvalReport evaluate_scores(std::span<const double> id_scores, std::span<const double> ood_scores);
std::string to_json(const EvalReport& report);

}  // namespace protood
