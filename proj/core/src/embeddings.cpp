#include "stepsim/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <spdlog/spdlog.h>
#include <unordered_set>

#include "stepsim/corpus.hpp"
#include "stepsim/csv.hpp"

namespace stepsim::embeddings {

TableFormat parse_table_format(std::string_view s) {
  if (s == "text-vec" || s == "txt" || s == "vec") return TableFormat::text_vec;
  if (s == "csv") return TableFormat::csv;
  throw ValidationError("unknown embedding format \"" + std::string(s) + "\"");
}

std::string_view to_string(TableKind k) {
  switch (k) {
    case TableKind::word: return "word";
    case TableKind::caption: return "caption";
    case TableKind::stimulus: return "stimulus";
  }
  return "word";
}

EmbeddingTable::EmbeddingTable(std::size_t dim, TableKind kind) : dim_(dim), kind_(kind) {
  if (dim == 0) throw ValidationError("embedding dimension must be positive");
}

bool EmbeddingTable::insert(std::string term, std::span<const double> vector) {
  if (term.empty()) throw ValidationError("empty embedding term");
  if (vector.size() != dim_) {
    throw ValidationError("vector for \"" + term + "\" has " + std::to_string(vector.size()) +
                          " components, expected " + std::to_string(dim_));
  }
  auto it = index_.find(term);
  std::size_t slot;
  bool fresh = it == index_.end();
  if (fresh) {
    slot = terms_.size();
    index_.emplace(term, slot);
    terms_.push_back(std::move(term));
    data_.resize(data_.size() + dim_);
  } else {
    slot = it->second;
  }
  std::transform(vector.begin(), vector.end(), data_.begin() + static_cast<std::ptrdiff_t>(slot * dim_),
                 [](double x) { return static_cast<float>(x); });
  return fresh;
}

bool EmbeddingTable::contains(std::string_view term) const {
  return index_.find(std::string(term)) != index_.end();
}

std::optional<std::span<const float>> EmbeddingTable::find(std::string_view term) const {
  auto it = index_.find(std::string(term));
  if (it == index_.end()) return std::nullopt;
  return std::span<const float>(data_.data() + it->second * dim_, dim_);
}

Vector EmbeddingTable::vector(std::string_view term) const {
  auto v = find(term);
  if (!v) throw ValidationError("term \"" + std::string(term) + "\" not in embedding table");
  return Vector(v->begin(), v->end());
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

bool is_uint(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

void add_entry(EmbeddingTable& table, std::string term, const Vector& v, const std::string& source,
               std::size_t line) {
  std::string copy = term;
  if (!table.insert(std::move(term), v))
    spdlog::warn("{}:{}: duplicate term \"{}\", keeping the last occurrence", source, line, copy);
}

}  // namespace

EmbeddingTable parse_table(std::string_view text, TableFormat format, TableKind kind,
                           const std::string& source) {
  if (format == TableFormat::csv) {
    auto rows = csv::parse(text, source);
    if (rows.empty()) throw ParseError(source, 1, 0, "missing header row");
    const auto& header = rows.front().fields;
    if (header.size() < 2 || header[0] != "term")
      throw ParseError(source, rows.front().line, 1, "expected header \"term,v0,...\"");
    const std::size_t dim = header.size() - 1;
    for (std::size_t k = 0; k < dim; ++k)
      if (header[k + 1] != "v" + std::to_string(k))
        throw ParseError(source, rows.front().line, k + 2, "expected column v" + std::to_string(k));
    EmbeddingTable table(dim, kind);
    Vector v(dim);
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& row = rows[r];
      if (row.fields.size() != dim + 1)
        throw ParseError(source, row.line, 0,
                         "dimension mismatch: expected " + std::to_string(dim) + " values, found " +
                             std::to_string(row.fields.size() - 1));
      if (row.fields[0].empty()) throw ParseError(source, row.line, 1, "empty term");
      for (std::size_t k = 0; k < dim; ++k)
        if (!csv::parse_double(row.fields[k + 1], v[k]))
          throw ParseError(source, row.line, k + 2, "unparseable float \"" + row.fields[k + 1] + "\"");
      add_entry(table, row.fields[0], v, source, row.line);
    }
    return table;
  }

  std::optional<EmbeddingTable> table;
  std::size_t dim = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  Vector v;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (!table && tok.size() == 2 && is_uint(tok[0]) && is_uint(tok[1])) {
      // "count dim" header
      std::from_chars(tok[1].data(), tok[1].data() + tok[1].size(), dim);
      if (dim == 0) throw ParseError(source, line_no, 2, "header declares zero dimension");
      table.emplace(dim, kind);
      continue;
    }
    if (!table) {
      if (tok.size() < 2) throw ParseError(source, line_no, 0, "entry without vector components");
      dim = tok.size() - 1;
      table.emplace(dim, kind);
    }
    if (tok.size() != dim + 1)
      throw ParseError(source, line_no, 0,
                       "dimension mismatch: expected " + std::to_string(dim) + " values, found " +
                           std::to_string(tok.size() - 1));
    v.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      if (!csv::parse_double(tok[k + 1], v[k]))
        throw ParseError(source, line_no, k + 2, "unparseable float \"" + std::string(tok[k + 1]) + "\"");
    }
    add_entry(*table, std::string(tok[0]), v, source, line_no);
  }
  if (!table) throw ParseError(source, 0, 0, "empty embedding file");
  return std::move(*table);
}

EmbeddingTable load_table(const std::string& path, TableFormat format, TableKind kind) {
  return parse_table(corpus::read_text_file(path), format, kind, path);
}

Vector mean_of(std::span<const Vector> vectors) {
  if (vectors.empty()) throw DomainError("mean of an empty vector set");
  Vector m(vectors.front().size(), 0.0);
  for (const auto& v : vectors) {
    if (v.size() != m.size()) throw DomainError("mean of vectors with different dimensions");
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += v[k];
  }
  const double inv = 1.0 / static_cast<double>(vectors.size());
  for (auto& x : m) x *= inv;
  return m;
}

Vector unit(std::span<const double> v) {
  const double n = norm(v);
  if (n == 0.0) throw DomainError("cannot normalize a zero vector");
  Vector out(v.begin(), v.end());
  for (auto& x : out) x /= n;
  return out;
}

// ---------------------------------------------------------------------------

FrequencyList load_frequencies(const std::string& path) {
  const std::string text = corpus::read_text_file(path);
  FrequencyList out;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line(text.data() + pos, (nl == std::string::npos ? text.size() : nl) - pos);
    pos = nl == std::string::npos ? text.size() : nl + 1;
    ++line_no;
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    long long count = 1;
    if (tok.size() >= 2 && !csv::parse_int(tok[1], count))
      throw ParseError(path, line_no, 2, "unparseable count");
    out[std::string(tok[0])] = count;
  }
  return out;
}

std::string alphabet_of(const std::vector<std::string>& terms) {
  std::set<char> chars;
  for (const auto& t : terms)
    for (char c : t)
      if (c != ' ' && c != '\t' && c != '\n' && c != '\r') chars.insert(c);
  return std::string(chars.begin(), chars.end());
}

SpellCorrector::SpellCorrector(Contains contains, std::string alphabet, const FrequencyList* frequencies)
    : contains_(std::move(contains)), alphabet_(std::move(alphabet)), frequencies_(frequencies) {}

SpellCorrector SpellCorrector::for_table(const EmbeddingTable& table, const FrequencyList* frequencies) {
  return SpellCorrector([&table](const std::string& w) { return table.contains(w); },
                        alphabet_of(table.terms()), frequencies);
}

namespace {

template <typename Visit>
void for_each_edit(const std::string& w, const std::string& alphabet, Visit&& visit) {
  const std::size_t n = w.size();
  std::string e;
  for (std::size_t i = 0; i < n; ++i) {  // deletions
    e = w;
    e.erase(i, 1);
    visit(e);
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {  // adjacent transpositions
    if (w[i] == w[i + 1]) continue;
    e = w;
    std::swap(e[i], e[i + 1]);
    visit(e);
  }
  for (std::size_t i = 0; i < n; ++i) {  // substitutions
    for (char c : alphabet) {
      if (c == w[i]) continue;
      e = w;
      e[i] = c;
      visit(e);
    }
  }
  for (std::size_t i = 0; i <= n; ++i) {  // insertions
    for (char c : alphabet) {
      e = w;
      e.insert(e.begin() + static_cast<std::ptrdiff_t>(i), c);
      visit(e);
    }
  }
}

}  // namespace

std::optional<std::string> SpellCorrector::correct(const std::string& word) const {
  if (word.empty()) return std::nullopt;
  if (contains_(word)) return word;

  std::optional<std::string> best;
  long long best_freq = -1;
  auto consider = [&](const std::string& cand) {
    if (!contains_(cand)) return;
    long long f = 0;
    if (frequencies_) {
      auto it = frequencies_->find(cand);
      if (it != frequencies_->end()) f = it->second;
    }
    if (!best || f > best_freq || (f == best_freq && cand < *best)) {
      best = cand;
      best_freq = f;
    }
  };

  std::unordered_set<std::string> ring1;
  for_each_edit(word, alphabet_, [&](const std::string& e) { ring1.insert(e); });
  ring1.erase(word);
  for (const auto& e : ring1) consider(e);
  if (best) return best;
  for (const auto& e : ring1) for_each_edit(e, alphabet_, consider);
  return best;
}

std::optional<std::string> spell_correct(const std::string& word, const std::vector<std::string>& vocab,
                                         const FrequencyList* frequencies) {
  std::unordered_set<std::string> set(vocab.begin(), vocab.end());
  SpellCorrector c([&set](const std::string& w) { return set.count(w) > 0; }, alphabet_of(vocab),
                   frequencies);
  return c.correct(word);
}

// ---------------------------------------------------------------------------

std::string_view to_string(Resolution r) {
  switch (r) {
    case Resolution::exact: return "exact";
    case Resolution::spell_corrected: return "spell-corrected";
    case Resolution::split: return "split";
    case Resolution::split_and_corrected: return "split-and-corrected";
    case Resolution::missing: return "missing";
  }
  return "missing";
}

namespace {

std::optional<std::string> exact_term(const std::string& text, const EmbeddingTable& table) {
  if (table.contains(text)) return text;
  if (text.find(' ') != std::string::npos) {
    std::string u = text;
    std::replace(u.begin(), u.end(), ' ', '_');
    if (table.contains(u)) return u;
  }
  return std::nullopt;
}

}  // namespace

ResolvedTag resolve_tag(std::string_view tag, const EmbeddingTable& table, bool split,
                        const SpellCorrector& corrector) {
  ResolvedTag out;
  out.original = std::string(tag);
  const auto words = corpus::split_words(tag);
  if (words.empty()) return out;
  std::string normalized = words.front();
  for (std::size_t k = 1; k < words.size(); ++k) normalized += " " + words[k];

  if (auto t = exact_term(normalized, table)) {
    out.resolved_terms = {*t};
    out.vector = table.vector(*t);
    out.resolution = Resolution::exact;
    return out;
  }
  if (words.size() == 1) {
    if (auto c = corrector.correct(normalized); c && table.contains(*c)) {
      out.resolved_terms = {*c};
      out.vector = table.vector(*c);
      out.resolution = Resolution::spell_corrected;
    }
    return out;
  }
  if (!split) return out;

  std::vector<Vector> found;
  bool corrected = false;
  for (const auto& w : words) {
    if (table.contains(w)) {
      out.resolved_terms.push_back(w);
      found.push_back(table.vector(w));
    } else if (auto c = corrector.correct(w); c && table.contains(*c)) {
      corrected = true;
      out.resolved_terms.push_back(*c);
      found.push_back(table.vector(*c));
    }
  }
  if (found.empty()) {
    out.resolved_terms.clear();
    return out;
  }
  out.vector = mean_of(found);
  out.resolution = corrected ? Resolution::split_and_corrected : Resolution::split;
  return out;
}

ResolvedTag resolve_tag(std::string_view tag, const EmbeddingTable& table, bool split) {
  return resolve_tag(tag, table, split, SpellCorrector::for_table(table));
}

}  // namespace stepsim::embeddings
