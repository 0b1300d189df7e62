#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stepsim/corpus.hpp"
#include "stepsim/embeddings.hpp"

namespace stepsim::fusion {

using embeddings::Vector;

/// Embedding parts of one stimulus: modality (DNN) vectors and an optional
/// language vector.
struct StimulusParts {
  std::vector<Vector> dnn;
  std::optional<Vector> llm;
};

/// [unit(dnn_1) | ... | unit(dnn_k) | alpha * unit(llm)]. Throws DomainError
/// for a zero-norm part or negative alpha.
Vector stack(std::span<const Vector> dnn, const Vector* llm, double alpha);
Vector stack(const StimulusParts& parts, double alpha);

/// Pairwise cosine of stacked vectors, in the order of `parts`.
corpus::SimilarityMatrix stacked_matrix(const std::vector<std::string>& ids,
                                        std::span<const StimulusParts> parts, double alpha,
                                        unsigned threads = 0);

/// 0 followed by 61 log-spaced points from 1e-3 to 1e3.
std::vector<double> default_alpha_grid();

/// Seeded choice of n stimulus ids (returned in their original order).
std::vector<std::string> choose_calibration(const std::vector<std::string>& ids, std::size_t n,
                                            std::uint64_t seed);

struct AlphaFit {
  double alpha = 0.0;
  double r = 0.0;
  std::vector<double> grid;
  std::vector<std::optional<double>> scores;  // nullopt where r was undefined
};

/// Grid search for the rescale factor maximizing Pearson r between stacked
/// cosine and `truth` over all pairs among `calibration`. `parts` is aligned
/// with `ids`. Ties keep the first grid point.
AlphaFit fit_alpha(const std::vector<std::string>& ids, std::span<const StimulusParts> parts,
                   const corpus::SimilarityMatrix& truth, const std::vector<std::string>& calibration,
                   std::span<const double> grid);

struct LtCcvOptions {
  int folds = 6;
  std::vector<double> lambda_grid = {1e-6, 1e-4, 1e-2, 1e-1, 1.0, 10.0, 100.0};
  bool standardize = false;  // "norm" variant: scale features to unit variance
  bool fit_intercept = true;
  std::uint64_t seed = 0;
};

/// Diagonal reweighting s(i,j) = intercept + sum_d w_d z_id z_jd.
struct ReweightModel {
  Vector weights;
  double intercept = 0.0;
  double ridge_lambda = 0.0;          // chosen on the full data
  std::vector<double> fold_lambdas;   // chosen inside each fold
  std::vector<double> fold_scores;    // held-out Pearson r per fold
  double mean_score = 0.0;

  double predict(std::span<const double> zi, std::span<const double> zj) const;
};

/// Elementwise product features for every pair i < j, condensed order.
std::vector<Vector> pair_features(std::span<const Vector> z);

/// Ridge regression of `targets` on pair features with the penalty picked per
/// fit by efficient leave-one-out error over `lambda_grid`. Folds partition
/// the stimuli: a fold trains on pairs between training stimuli and scores
/// every pair touching a held-out stimulus.
ReweightModel lt_ccv(std::span<const Vector> z, const corpus::SimilarityMatrix& targets,
                     const LtCcvOptions& options = {});

/// JSON export with weights, lambda, fold scores and (optionally) alpha.
std::string model_to_json(const ReweightModel& model);
std::string alpha_to_json(const AlphaFit& fit, const std::vector<std::string>& calibration);

}  // namespace stepsim::fusion
