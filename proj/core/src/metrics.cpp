#include "stepsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "stepsim/csv.hpp"
#include "stepsim/error.hpp"
#include "stepsim/hash.hpp"

namespace stepsim::metrics {

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("pearson: length mismatch");
  if (x.size() < 3) throw DomainError("pearson: need at least 3 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = x[k] - mx, dy = y[k] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DomainError("pearson: constant input");
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

std::vector<double> midranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("spearman: length mismatch");
  if (x.size() < 2) throw DomainError("spearman: need at least 2 points");
  const auto rx = midranks(x);
  const auto ry = midranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < rx.size(); ++k) {
    sxy += (rx[k] - mean) * (ry[k] - mean);
    sxx += (rx[k] - mean) * (rx[k] - mean);
    syy += (ry[k] - mean) * (ry[k] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) throw DomainError("spearman: all-tied input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman_brown(double r_half) {
  if (r_half <= -1.0) throw DomainError("spearman-brown undefined for r <= -1");
  return 2.0 * r_half / (1.0 + r_half);
}

double split_half_irr(const corpus::JudgmentSet& judgments, int n_splits, std::uint64_t seed,
                      bool include_repeats) {
  if (n_splits < 1) throw DomainError("split_half_irr: n_splits must be >= 1");
  std::map<corpus::StimulusPair, std::vector<double>> by_pair;
  for (const auto& r : judgments.records) {
    if (r.is_repeat && !include_repeats) continue;
    by_pair[r.pair].push_back(r.value);
  }
  for (auto& [pair, values] : by_pair) {
    if (values.size() < 2)
      throw ValidationError("split_half_irr: pair (" + pair.first + "," + pair.second +
                        ") has fewer than 2 ratings");
    std::sort(values.begin(), values.end());
  }
  if (by_pair.size() < 3) throw DomainError("split_half_irr: need at least 3 pairs");

  std::vector<double> half_a(by_pair.size()), half_b(by_pair.size());
  std::vector<double> scratch;
  double total = 0.0;
  for (int s = 0; s < n_splits; ++s) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(s)));
    std::size_t p = 0;
    for (const auto& [pair, values] : by_pair) {
      scratch = values;
      std::shuffle(scratch.begin(), scratch.end(), rng);
      std::size_t cut = scratch.size() / 2;
      if (scratch.size() % 2 == 1 && std::bernoulli_distribution(0.5)(rng)) ++cut;
      const double sa = std::accumulate(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(cut), 0.0);
      const double sb = std::accumulate(scratch.begin() + static_cast<std::ptrdiff_t>(cut), scratch.end(), 0.0);
      half_a[p] = sa / static_cast<double>(cut);
      half_b[p] = sb / static_cast<double>(scratch.size() - cut);
      ++p;
    }
    const double r_half = pearson(half_a, half_b);
    const double corrected = r_half <= -1.0 ? -1.0 : spearman_brown(r_half);
    total += std::clamp(corrected, -1.0, 1.0);
  }
  return total / static_cast<double>(n_splits);
}

EvaluationReport evaluate(std::span<const corpus::SimilarityMatrix> methods,
                          const corpus::SimilarityMatrix& truth, const corpus::JudgmentSet* judgments,
                          int n_splits, std::uint64_t seed) {
  EvaluationReport report;
  report.dataset_id = judgments ? judgments->dataset_id : std::string{};
  for (const auto& m : methods) {
    if (m.ids() != truth.ids())
      throw ValidationError("stimulus ordering of method \"" + m.method() +
                            "\" does not match the ground truth");
    report.rows.push_back({m.method(), pearson(m.values(), truth.values()), m.values().size()});
  }
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const ReportRow& a, const ReportRow& b) { return a.pearson > b.pearson; });
  if (judgments) {
    report.irr = split_half_irr(*judgments, n_splits, seed);
    report.n_splits = n_splits;
  }
  return report;
}

void write_report_csv(std::ostream& out, const EvaluationReport& report) {
  csv::write_row(out, {"method", "pearson_r", "n_pairs"});
  const std::size_t n_pairs = report.rows.empty() ? 0 : report.rows.front().n_pairs;
  for (const auto& r : report.rows)
    csv::write_row(out, {r.method, csv::format_double(r.pearson), std::to_string(r.n_pairs)});
  if (report.irr)
    csv::write_row(out, {"IRR", csv::format_double(*report.irr), std::to_string(n_pairs)});
}

EvaluationReport read_report_csv(const std::string& path) {
  auto rows = csv::read_file(path);
  if (rows.empty() || rows[0].fields != std::vector<std::string>{"method", "pearson_r", "n_pairs"})
    throw ParseError(path, 1, 0, "expected header \"method,pearson_r,n_pairs\"");
  EvaluationReport report;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto& f = rows[k].fields;
    if (f.size() != 3) throw ParseError(path, rows[k].line, 0, "expected 3 fields");
    double r;
    long long n;
    if (!csv::parse_double(f[1], r)) throw ParseError(path, rows[k].line, 2, "unparseable r");
    if (!csv::parse_int(f[2], n)) throw ParseError(path, rows[k].line, 3, "unparseable n_pairs");
    if (f[0] == "IRR")
      report.irr = r;
    else
      report.rows.push_back({f[0], r, static_cast<std::size_t>(n)});
  }
  return report;
}

std::string format_report_table(const EvaluationReport& report) {
  std::size_t width = 6;
  for (const auto& r : report.rows) width = std::max(width, r.method.size());
  std::ostringstream out;
  auto line = [&](const std::string& name, double r, std::size_t n) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%8.4f  %8zu", r, n);
    out << name << std::string(width - name.size() + 2, ' ') << buf << '\n';
  };
  out << "method" << std::string(width - 6 + 2, ' ') << "       r   n_pairs\n";
  out << std::string(width + 20, '-') << '\n';
  for (const auto& r : report.rows) line(r.method, r.pearson, r.n_pairs);
  if (report.irr) {
    out << std::string(width + 20, '-') << '\n';
    line("IRR", *report.irr, report.rows.empty() ? 0 : report.rows.front().n_pairs);
  }
  return out.str();
}

}  // namespace stepsim::metrics
