#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stepsim/error.hpp"

namespace stepsim::embeddings {

using Vector = std::vector<double>;

enum class TableKind { word, caption, stimulus };
enum class TableFormat { text_vec, csv };

TableFormat parse_table_format(std::string_view s);
std::string_view to_string(TableKind k);

/// Immutable term -> vector map with a fixed dimensionality. Vectors are kept
/// in one contiguous float buffer; arithmetic is done in double.
class EmbeddingTable {
 public:
  EmbeddingTable(std::size_t dim, TableKind kind);

  /// Adds or replaces an entry. Returns false when it replaced an existing term.
  bool insert(std::string term, std::span<const double> vector);

  std::size_t dim() const noexcept { return dim_; }
  TableKind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return terms_.size(); }
  bool contains(std::string_view term) const;
  std::optional<std::span<const float>> find(std::string_view term) const;
  Vector vector(std::string_view term) const;  // throws when missing
  const std::vector<std::string>& terms() const noexcept { return terms_; }

 private:
  std::size_t dim_;
  TableKind kind_;
  std::vector<std::string> terms_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// text-vec: one "term v1 ... vdim" line per entry, whitespace separated, with
/// an optional leading "count dim" header. csv: header "term,v0,...,v{dim-1}".
/// Duplicate terms keep the last occurrence (logged).
EmbeddingTable load_table(const std::string& path, TableFormat format,
                          TableKind kind = TableKind::word);
EmbeddingTable parse_table(std::string_view text, TableFormat format, TableKind kind,
                           const std::string& source = {});

// ---------------------------------------------------------------------------

template <typename A, typename B>
double dot(std::span<const A> u, std::span<const B> v) {
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) s += static_cast<double>(u[k]) * static_cast<double>(v[k]);
  return s;
}

template <typename A>
double norm(std::span<const A> u) {
  return std::sqrt(dot(u, u));
}

/// dot(u,v) / (|u||v|). Throws DomainError for zero vectors or mismatched sizes.
template <typename A, typename B>
double cosine(std::span<const A> u, std::span<const B> v) {
  if (u.size() != v.size()) throw DomainError("cosine of vectors with different dimensions");
  const double nu = norm(u), nv = norm(v);
  if (nu == 0.0 || nv == 0.0) throw DomainError("cosine of a zero vector");
  double c = dot(u, v) / (nu * nv);
  return c > 1.0 ? 1.0 : (c < -1.0 ? -1.0 : c);
}

inline double cosine(const Vector& u, const Vector& v) {
  return cosine(std::span<const double>(u), std::span<const double>(v));
}

Vector mean_of(std::span<const Vector> vectors);
Vector unit(std::span<const double> v);  // throws DomainError for a zero vector

// ---------------------------------------------------------------------------
// Spell correction

/// Word counts used to rank equally distant corrections ("word count" lines).
using FrequencyList = std::unordered_map<std::string, long long>;
FrequencyList load_frequencies(const std::string& path);

/// Vocabulary-constrained corrector: returns the in-vocabulary word reachable
/// with the fewest (at most two) deletions, insertions, substitutions or
/// adjacent transpositions. Ties go to the higher frequency, then to the
/// lexicographically smaller word.
class SpellCorrector {
 public:
  using Contains = std::function<bool(const std::string&)>;

  /// `alphabet` lists the characters tried for insertions and substitutions.
  SpellCorrector(Contains contains, std::string alphabet, const FrequencyList* frequencies = nullptr);

  static SpellCorrector for_table(const EmbeddingTable& table,
                                  const FrequencyList* frequencies = nullptr);

  std::optional<std::string> correct(const std::string& word) const;

 private:
  Contains contains_;
  std::string alphabet_;
  const FrequencyList* frequencies_;
};

/// Alphabet of all characters used by the terms (whitespace excluded).
std::string alphabet_of(const std::vector<std::string>& terms);

/// Free-function form over an explicit word set.
std::optional<std::string> spell_correct(const std::string& word,
                                         const std::vector<std::string>& vocab,
                                         const FrequencyList* frequencies = nullptr);

// ---------------------------------------------------------------------------
// Tag resolution

enum class Resolution { exact, spell_corrected, split, split_and_corrected, missing };
std::string_view to_string(Resolution r);

struct ResolvedTag {
  std::string original;
  std::vector<std::string> resolved_terms;
  std::optional<Vector> vector;
  Resolution resolution = Resolution::missing;
};

/// Lookup order: exact (also trying '_' for spaces, the multi-word convention
/// of most vector files); single words are then spell corrected; multi-word
/// tags are split, each word corrected, and the found words averaged when
/// `split` is set, otherwise reported missing.
ResolvedTag resolve_tag(std::string_view tag, const EmbeddingTable& table, bool split,
                        const SpellCorrector& corrector);
ResolvedTag resolve_tag(std::string_view tag, const EmbeddingTable& table, bool split);

}  // namespace stepsim::embeddings
