#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stepsim/corpus.hpp"

namespace stepsim::metrics {

/// Product-moment correlation. Throws DomainError on length mismatch,
/// fewer than 3 points, or a constant series.
double pearson(std::span<const double> x, std::span<const double> y);

/// Average ranks (1-based), ties sharing the mean of their positions.
std::vector<double> midranks(std::span<const double> x);

/// Pearson over mid-ranks. Needs at least 2 points and no all-tied input.
double spearman(std::span<const double> x, std::span<const double> y);

/// Two-half Spearman-Brown prophecy: 2r / (1 + r).
double spearman_brown(double r_half);

/// Split-half reliability: every pair's ratings are shuffled and cut into two
/// halves (odd counts give the extra rating to a random half), the half means
/// are correlated across pairs, Spearman-Brown corrected, clamped to [-1,1]
/// and averaged over n_splits. Rater labels never influence the split.
double split_half_irr(const corpus::JudgmentSet& judgments, int n_splits = 100,
                      std::uint64_t seed = 0, bool include_repeats = true);

struct ReportRow {
  std::string method;
  double pearson = 0.0;
  std::size_t n_pairs = 0;
};

struct EvaluationReport {
  std::string dataset_id;
  std::vector<ReportRow> rows;  // descending by r
  std::optional<double> irr;
  int n_splits = 0;
};

/// One Pearson row per method against `truth`; every matrix must list the
/// stimuli in the same order as `truth`.
EvaluationReport evaluate(std::span<const corpus::SimilarityMatrix> methods,
                          const corpus::SimilarityMatrix& truth,
                          const corpus::JudgmentSet* judgments = nullptr, int n_splits = 100,
                          std::uint64_t seed = 0);

/// "method,pearson_r,n_pairs" rows followed by an "IRR" row when present.
void write_report_csv(std::ostream& out, const EvaluationReport& report);
EvaluationReport read_report_csv(const std::string& path);
std::string format_report_table(const EvaluationReport& report);

}  // namespace stepsim::metrics
