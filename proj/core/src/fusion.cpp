#include "stepsim/fusion.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>
#include <unordered_map>

#include "stepsim/error.hpp"
#include "stepsim/metrics.hpp"
#include "stepsim/pairwise.hpp"

namespace stepsim::fusion {

using corpus::condensed_index;
using corpus::SimilarityMatrix;

namespace {

void append_scaled_unit(Vector& out, std::span<const double> part, double scale) {
  const double n = embeddings::norm(part);
  if (n == 0.0) throw DomainError("cannot stack a zero-norm embedding part");
  for (double x : part) out.push_back(scale * (x / n));
}

}  // namespace

Vector stack(std::span<const Vector> dnn, const Vector* llm, double alpha) {
  if (!(alpha >= 0.0)) throw DomainError("alpha must be nonnegative");
  Vector out;
  for (const auto& part : dnn) append_scaled_unit(out, part, 1.0);
  if (llm) append_scaled_unit(out, *llm, alpha);
  return out;
}

Vector stack(const StimulusParts& parts, double alpha) {
  return stack(parts.dnn, parts.llm ? &*parts.llm : nullptr, alpha);
}

SimilarityMatrix stacked_matrix(const std::vector<std::string>& ids, std::span<const StimulusParts> parts,
                                double alpha, unsigned threads) {
  if (ids.size() != parts.size()) throw ValidationError("ids and embedding parts differ in length");
  std::vector<Vector> stacked;
  stacked.reserve(parts.size());
  for (const auto& p : parts) {
    stacked.push_back(stack(p, alpha));
    if (stacked.back().size() != stacked.front().size())
      throw ValidationError("stimuli have different embedding part dimensions");
  }
  auto values = pairwise_condensed(
      ids.size(), [&](std::size_t i, std::size_t j) { return embeddings::cosine(stacked[i], stacked[j]); },
      threads);
  return SimilarityMatrix(ids, std::move(values), "stacked", corpus::Scale::unit);
}

std::vector<double> default_alpha_grid() {
  std::vector<double> grid{0.0};
  for (int k = 0; k <= 60; ++k) grid.push_back(std::pow(10.0, -3.0 + 0.1 * k));
  return grid;
}

std::vector<std::string> choose_calibration(const std::vector<std::string>& ids, std::size_t n,
                                            std::uint64_t seed) {
  if (n > ids.size()) throw ValidationError("calibration subset larger than the dataset");
  std::vector<std::size_t> idx(ids.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  std::vector<std::string> out;
  for (auto k : idx) out.push_back(ids[k]);
  return out;
}

AlphaFit fit_alpha(const std::vector<std::string>& ids, std::span<const StimulusParts> parts,
                   const SimilarityMatrix& truth, const std::vector<std::string>& calibration,
                   std::span<const double> grid) {
  if (grid.empty()) throw ValidationError("empty alpha grid");
  if (ids.size() != parts.size()) throw ValidationError("ids and embedding parts differ in length");
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t k = 0; k < ids.size(); ++k) pos.emplace(ids[k], k);

  std::vector<std::size_t> cal;
  for (const auto& id : calibration) {
    auto it = pos.find(id);
    if (it == pos.end()) throw ValidationError("calibration stimulus \"" + id + "\" has no embeddings");
    if (!truth.index_of(id)) throw ValidationError("calibration stimulus \"" + id + "\" has no ground truth");
    cal.push_back(it->second);
  }
  if (cal.size() < 3) throw ValidationError("calibration needs at least 3 stimuli");

  std::vector<double> target;
  for (std::size_t a = 0; a < cal.size(); ++a)
    for (std::size_t b = a + 1; b < cal.size(); ++b)
      target.push_back(truth.at(ids[cal[a]], ids[cal[b]]));

  AlphaFit fit;
  fit.grid.assign(grid.begin(), grid.end());
  std::optional<std::size_t> best;
  std::vector<double> pred(target.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<Vector> stacked;
    for (auto k : cal) stacked.push_back(stack(parts[k], grid[g]));
    std::size_t p = 0;
    for (std::size_t a = 0; a < cal.size(); ++a)
      for (std::size_t b = a + 1; b < cal.size(); ++b)
        pred[p++] = embeddings::cosine(stacked[a], stacked[b]);
    try {
      const double r = metrics::pearson(pred, target);
      fit.scores.emplace_back(r);
      if (!best || r > *fit.scores[*best]) best = g;
    } catch (const DomainError&) {
      fit.scores.emplace_back(std::nullopt);
    }
  }
  if (!best) throw DomainError("stacked predictions are constant for every alpha in the grid");
  fit.alpha = grid[*best];
  fit.r = *fit.scores[*best];
  return fit;
}

// ---------------------------------------------------------------------------
// LT-CCV

double ReweightModel::predict(std::span<const double> zi, std::span<const double> zj) const {
  double s = intercept;
  for (std::size_t d = 0; d < weights.size(); ++d) s += weights[d] * zi[d] * zj[d];
  return s;
}

std::vector<Vector> pair_features(std::span<const Vector> z) {
  const std::size_t n = z.size();
  std::vector<Vector> out;
  out.reserve(corpus::pair_count(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      Vector f(z[i].size());
      for (std::size_t d = 0; d < f.size(); ++d) f[d] = z[i][d] * z[j][d];
      out.push_back(std::move(f));
    }
  return out;
}

namespace {

struct RidgeFit {
  Eigen::VectorXd w;  // in original feature units
  double intercept = 0.0;
  double lambda = 0.0;
};

/// Ridge with leave-one-out selection of lambda via the SVD hat matrix.
RidgeFit fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LtCcvOptions& opt) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  Eigen::RowVectorXd x_mean = Eigen::RowVectorXd::Zero(d);
  double y_mean = 0.0;
  if (opt.fit_intercept) {
    x_mean = X.colwise().mean();
    y_mean = y.mean();
  }
  Eigen::MatrixXd Xc = X.rowwise() - x_mean;
  Eigen::VectorXd yc = y.array() - y_mean;
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(d);
  if (opt.standardize) {
    for (Eigen::Index c = 0; c < d; ++c) {
      const double sd = std::sqrt(Xc.col(c).squaredNorm() / static_cast<double>(n));
      scale(c) = sd > 0.0 ? sd : 1.0;
      Xc.col(c) /= scale(c);
    }
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(Xc, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  const Eigen::MatrixXd& U = svd.matrixU();
  const Eigen::VectorXd uty = U.transpose() * yc;
  const Eigen::MatrixXd U2 = U.array().square();

  double best_err = std::numeric_limits<double>::infinity();
  double best_lambda = opt.lambda_grid.front();
  for (double lambda : opt.lambda_grid) {
    if (!(lambda > 0.0)) throw ValidationError("ridge penalties must be positive");
    const Eigen::VectorXd shrink = s.array().square() / (s.array().square() + lambda);
    const Eigen::VectorXd fitted = U * (shrink.asDiagonal() * uty);
    Eigen::VectorXd hat = U2 * shrink;
    if (opt.fit_intercept) hat.array() += 1.0 / static_cast<double>(n);
    const Eigen::VectorXd resid = yc - fitted;
    double err = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = resid(i) / (1.0 - hat(i));
      err += e * e;
    }
    if (err < best_err) {
      best_err = err;
      best_lambda = lambda;
    }
  }

  RidgeFit out;
  out.lambda = best_lambda;
  const Eigen::VectorXd coef_scaled =
      svd.matrixV() * ((s.array() / (s.array().square() + best_lambda)).matrix().asDiagonal() * uty);
  out.w = coef_scaled.array() / scale.array();
  out.intercept = y_mean - x_mean.dot(out.w);
  return out;
}

Eigen::MatrixXd rows_of(const std::vector<Vector>& feats, const std::vector<std::size_t>& idx, std::size_t d) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t c = 0; c < d; ++c) X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = feats[idx[r]][c];
  return X;
}

}  // namespace

ReweightModel lt_ccv(std::span<const Vector> z, const SimilarityMatrix& targets, const LtCcvOptions& opt) {
  const std::size_t n = z.size();
  if (targets.size() != n) throw ValidationError("targets and embeddings cover different stimulus counts");
  if (n < 3) throw ValidationError("lt_ccv needs at least 3 stimuli");
  if (opt.folds < 2 || static_cast<std::size_t>(opt.folds) > n)
    throw ValidationError("fold count must lie in [2, number of stimuli]");
  if (opt.lambda_grid.empty()) throw ValidationError("empty ridge penalty grid");
  const std::size_t d = z.front().size();
  for (const auto& v : z)
    if (v.size() != d) throw ValidationError("embeddings have different dimensions");

  const auto feats = pair_features(z);
  const auto& y_all = targets.values();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(opt.seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> fold_of(n);
  for (std::size_t k = 0; k < n; ++k) fold_of[order[k]] = static_cast<int>(k % static_cast<std::size_t>(opt.folds));

  ReweightModel model;
  for (int f = 0; f < opt.folds; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const std::size_t k = condensed_index(i, j, n);
        if (fold_of[i] == f || fold_of[j] == f)
          test.push_back(k);
        else
          train.push_back(k);
      }
    if (test.size() < 3) throw ValidationError("fold " + std::to_string(f) + " holds out fewer than 3 pairs");
    if (train.size() < 2) throw ValidationError("fold " + std::to_string(f) + " leaves fewer than 2 training pairs");
    Eigen::VectorXd y(static_cast<Eigen::Index>(train.size()));
    for (std::size_t r = 0; r < train.size(); ++r) y(static_cast<Eigen::Index>(r)) = y_all[train[r]];
    const RidgeFit fit = fit_ridge(rows_of(feats, train, d), y, opt);
    std::vector<double> pred, truth;
    for (auto k : test) {
      double s = fit.intercept;
      for (std::size_t c = 0; c < d; ++c) s += fit.w(static_cast<Eigen::Index>(c)) * feats[k][c];
      pred.push_back(s);
      truth.push_back(y_all[k]);
    }
    model.fold_lambdas.push_back(fit.lambda);
    model.fold_scores.push_back(metrics::pearson(pred, truth));
  }
  model.mean_score = std::accumulate(model.fold_scores.begin(), model.fold_scores.end(), 0.0) /
                     static_cast<double>(model.fold_scores.size());

  std::vector<std::size_t> all(feats.size());
  std::iota(all.begin(), all.end(), 0);
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(y_all.data(), static_cast<Eigen::Index>(y_all.size()));
  const RidgeFit full = fit_ridge(rows_of(feats, all, d), y, opt);
  model.weights.assign(full.w.data(), full.w.data() + full.w.size());
  model.intercept = full.intercept;
  model.ridge_lambda = full.lambda;
  return model;
}

std::string model_to_json(const ReweightModel& model) {
  nlohmann::json j;
  j["weights"] = model.weights;
  j["intercept"] = model.intercept;
  j["lambda"] = model.ridge_lambda;
  j["fold_lambdas"] = model.fold_lambdas;
  j["fold_scores"] = model.fold_scores;
  j["mean_score"] = model.mean_score;
  return j.dump(2) + "\n";
}

std::string alpha_to_json(const AlphaFit& fit, const std::vector<std::string>& calibration) {
  nlohmann::json j;
  j["alpha"] = fit.alpha;
  j["r"] = fit.r;
  j["calibration"] = calibration;
  nlohmann::json curve = nlohmann::json::array();
  for (std::size_t g = 0; g < fit.grid.size(); ++g) {
    nlohmann::json pt{{"alpha", fit.grid[g]}};
    pt["r"] = fit.scores[g] ? nlohmann::json(*fit.scores[g]) : nlohmann::json(nullptr);
    curve.push_back(pt);
  }
  j["curve"] = curve;
  return j.dump(2) + "\n";
}

}  // namespace stepsim::fusion
