#include "stepsim/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "stepsim/csv.hpp"
#include "stepsim/error.hpp"

namespace stepsim::corpus {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool has_upper(std::string_view s) {
  return std::any_of(s.begin(), s.end(),
                     [](char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; });
}

void expect_header(const std::vector<csv::Row>& rows, const std::vector<std::string>& header,
                   const std::string& source) {
  if (rows.empty()) throw ParseError(source, 1, 0, "missing header row");
  std::vector<std::string> got;
  for (const auto& f : rows.front().fields) got.emplace_back(csv::trim(f));
  if (got != header) {
    std::string want;
    for (std::size_t k = 0; k < header.size(); ++k) want += (k ? "," : "") + header[k];
    throw ParseError(source, rows.front().line, 0, "expected header \"" + want + "\"");
  }
}

void expect_arity(const csv::Row& row, std::size_t n, const std::string& source) {
  if (row.fields.size() != n) {
    throw ParseError(source, row.line, 0,
                     "expected " + std::to_string(n) + " fields, found " +
                         std::to_string(row.fields.size()));
  }
}

bool parse_bool(std::string_view s, bool& out) {
  std::string v = lower(csv::trim(s));
  if (v == "true" || v == "1") {
    out = true;
    return true;
  }
  if (v == "false" || v == "0") {
    out = false;
    return true;
  }
  return false;
}

void check_id(std::string_view id, const std::string& source, std::size_t line, std::size_t col) {
  if (id.empty()) throw ParseError(source, line, col, "empty stimulus id");
  if (id.find_first_of(";\n\r") != std::string_view::npos) {
    throw ParseError(source, line, col, "stimulus id may not contain ';' or line breaks");
  }
}

}  // namespace

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::image: return "image";
    case Modality::audio: return "audio";
    case Modality::video: return "video";
  }
  return "image";
}

Modality parse_modality(std::string_view s) {
  std::string v = lower(csv::trim(s));
  if (v == "image") return Modality::image;
  if (v == "audio") return Modality::audio;
  if (v == "video") return Modality::video;
  throw ValidationError("unknown modality \"" + std::string(s) + "\"");
}

StimulusPair StimulusPair::of(std::string a, std::string b) {
  if (a == b) throw ValidationError("pair of identical stimulus ids \"" + a + "\"");
  if (b < a) std::swap(a, b);
  return StimulusPair{std::move(a), std::move(b)};
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::size_t count_words(std::string_view text) { return split_words(text).size(); }

std::size_t count_unique_words(std::string_view text) {
  std::set<std::string> seen;
  for (const auto& w : split_words(text)) seen.insert(lower(w));
  return seen.size();
}

bool meets_caption_rule(std::string_view text, std::size_t min_words, std::size_t min_unique) {
  return count_words(text) >= min_words && count_unique_words(text) >= min_unique;
}

// ---------------------------------------------------------------------------

std::optional<double> TagState::mean_stars() const {
  if (ratings.empty()) return std::nullopt;
  return static_cast<double>(star_sum()) / static_cast<double>(ratings.size());
}

int TagState::star_sum() const {
  int s = 0;
  for (const auto& r : ratings) s += r.stars;
  return s;
}

std::size_t TagState::distinct_flaggers() const {
  std::set<std::string> who;
  for (const auto& f : flags) who.insert(f.participant);
  return who.size();
}

std::vector<std::size_t> TagChain::active_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < tags.size(); ++k)
    if (!tags[k].removed) out.push_back(k);
  return out;
}

std::vector<std::string> TagChain::active_texts() const {
  std::vector<std::string> out;
  for (const auto& t : tags)
    if (!t.removed) out.push_back(t.text);
  return out;
}

std::optional<std::size_t> TagChain::find_active(std::string_view text) const {
  for (std::size_t k = 0; k < tags.size(); ++k)
    if (!tags[k].removed && tags[k].text == text) return k;
  return std::nullopt;
}

void validate_chain(const TagChain& chain, int max_iterations) {
  const std::string where = "chain " + chain.stimulus_id + ": ";
  if (chain.stimulus_id.empty()) throw ValidationError("chain with empty stimulus id");
  if (static_cast<int>(chain.iterations.size()) > max_iterations) {
    throw ValidationError(where + std::to_string(chain.iterations.size()) +
                          " iterations exceed the cap of " + std::to_string(max_iterations));
  }
  std::set<std::string> active;
  for (const auto& t : chain.tags) {
    if (t.text.empty()) throw ValidationError(where + "empty tag text");
    if (has_upper(t.text)) throw ValidationError(where + "tag \"" + t.text + "\" is not lowercase");
    for (const auto& r : t.ratings) {
      if (r.stars < 1 || r.stars > 5) {
        throw ValidationError(where + "tag \"" + t.text + "\" has star rating " +
                              std::to_string(r.stars) + " outside [1,5]");
      }
    }
    if (!t.removed && !active.insert(t.text).second) {
      throw ValidationError(where + "duplicate active tag \"" + t.text + "\"");
    }
  }
}

// ---------------------------------------------------------------------------

std::string_view to_string(Scale s) { return s == Scale::unit ? "unit" : "raw"; }

Scale parse_scale(std::string_view s) {
  std::string v = lower(csv::trim(s));
  if (v == "raw") return Scale::raw;
  if (v == "unit") return Scale::unit;
  throw ValidationError("unknown scale \"" + std::string(s) + "\"");
}

std::pair<std::size_t, std::size_t> condensed_pair(std::size_t k, std::size_t n) {
  std::size_t i = 0;
  std::size_t row_len = n - 1;
  while (k >= row_len) {
    k -= row_len;
    ++i;
    --row_len;
  }
  return {i, i + 1 + k};
}

SimilarityMatrix::SimilarityMatrix(std::vector<std::string> ids, std::vector<double> values,
                                   std::string method, Scale scale)
    : ids_(std::move(ids)), values_(std::move(values)), method_(std::move(method)), scale_(scale) {
  if (values_.size() != pair_count(ids_.size())) {
    throw ValidationError("matrix over " + std::to_string(ids_.size()) + " stimuli needs " +
                          std::to_string(pair_count(ids_.size())) + " values, got " +
                          std::to_string(values_.size()));
  }
  for (std::size_t k = 0; k < values_.size(); ++k) {
    if (!std::isfinite(values_[k])) {
      auto [i, j] = condensed_pair(k, ids_.size());
      throw ValidationError("non-finite similarity for pair (" + ids_[i] + "," + ids_[j] + ")");
    }
  }
  index_.reserve(ids_.size());
  for (std::size_t k = 0; k < ids_.size(); ++k) {
    if (!index_.emplace(ids_[k], k).second)
      throw ValidationError("duplicate stimulus id \"" + ids_[k] + "\" in matrix");
  }
}

double SimilarityMatrix::at(std::size_t i, std::size_t j) const {
  if (i == j) throw DomainError("diagonal entries are not stored");
  if (i > j) std::swap(i, j);
  if (j >= ids_.size()) throw std::out_of_range("matrix index out of range");
  return values_[condensed_index(i, j, ids_.size())];
}

double SimilarityMatrix::at(std::string_view a, std::string_view b) const {
  auto i = index_of(a);
  auto j = index_of(b);
  if (!i || !j) throw ValidationError("unknown stimulus id in matrix lookup");
  return at(*i, *j);
}

std::optional<std::size_t> SimilarityMatrix::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

SimilarityMatrix aggregate_judgments(const JudgmentSet& judgments,
                                     std::span<const std::string> stimulus_order,
                                     AggregateOptions options) {
  std::vector<std::string> ids;
  if (stimulus_order.empty()) {
    std::set<std::string> seen;
    for (const auto& r : judgments.records) {
      seen.insert(r.pair.first);
      seen.insert(r.pair.second);
    }
    ids.assign(seen.begin(), seen.end());
  } else {
    ids.assign(stimulus_order.begin(), stimulus_order.end());
  }
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t k = 0; k < ids.size(); ++k) pos.emplace(ids[k], k);

  const std::size_t n = ids.size();
  std::vector<double> sum(pair_count(n), 0.0);
  std::vector<std::size_t> count(pair_count(n), 0);
  for (const auto& r : judgments.records) {
    if (r.is_repeat && !options.include_repeats) continue;
    auto a = pos.find(r.pair.first);
    auto b = pos.find(r.pair.second);
    if (a == pos.end() || b == pos.end()) {
      throw ValidationError("judgment for pair (" + r.pair.first + "," + r.pair.second +
                            ") references a stimulus outside the matrix order");
    }
    std::size_t i = a->second, j = b->second;
    if (i > j) std::swap(i, j);
    const std::size_t k = condensed_index(i, j, n);
    sum[k] += r.value;
    ++count[k];
  }
  std::vector<std::string> missing;
  std::size_t n_missing = 0;
  std::vector<double> values(sum.size());
  for (std::size_t k = 0; k < sum.size(); ++k) {
    if (count[k] == 0) {
      ++n_missing;
      if (missing.size() < 10) {
        auto [i, j] = condensed_pair(k, n);
        missing.push_back("(" + ids[i] + "," + ids[j] + ")");
      }
      continue;
    }
    values[k] = sum[k] / static_cast<double>(count[k]);
  }
  if (n_missing > 0) {
    std::string msg = std::to_string(n_missing) + " pair(s) without judgments:";
    for (const auto& m : missing) msg += " " + m;
    if (n_missing > missing.size()) msg += " ...";
    throw ValidationError(msg);
  }
  return SimilarityMatrix(std::move(ids), std::move(values), "human-mean", Scale::raw);
}

// ---------------------------------------------------------------------------
// Matrix I/O

MatrixFormat parse_matrix_format(std::string_view s) {
  if (s == "condensed-csv") return MatrixFormat::condensed_csv;
  if (s == "full-csv") return MatrixFormat::full_csv;
  if (s == "json") return MatrixFormat::json;
  throw ValidationError("unknown matrix format \"" + std::string(s) + "\"");
}

namespace {

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (k) out.push_back(';');
    out += ids[k];
  }
  return out;
}

std::vector<std::string> split_ids(std::string_view s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    auto p = s.find(';', start);
    out.emplace_back(s.substr(start, p == std::string_view::npos ? p : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

SimilarityMatrix read_condensed(const std::vector<csv::Row>& rows, const std::string& source) {
  if (rows.size() < 3) throw ParseError(source, 0, 0, "condensed matrix needs metadata rows");
  expect_arity(rows[1], 3, source);
  const std::string method = rows[1].fields[0];
  Scale scale;
  try {
    scale = parse_scale(rows[1].fields[1]);
  } catch (const ValidationError& e) {
    throw ParseError(source, rows[1].line, 2, e.what());
  }
  std::vector<std::string> ids = split_ids(rows[1].fields[2]);
  expect_arity(rows[2], 3, source);
  if (rows[2].fields[0] != "id_a" || rows[2].fields[1] != "id_b" || rows[2].fields[2] != "value")
    throw ParseError(source, rows[2].line, 0, "expected header \"id_a,id_b,value\"");

  const std::size_t n = ids.size();
  const std::size_t expected = pair_count(n);
  if (rows.size() - 3 != expected) {
    throw ValidationError(source + ": header lists " + std::to_string(n) + " stimuli (" +
                          std::to_string(expected) + " pairs) but file has " +
                          std::to_string(rows.size() - 3) + " value rows");
  }
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t k = 0; k < n; ++k) pos.emplace(ids[k], k);
  std::vector<double> values(expected, 0.0);
  std::vector<bool> filled(expected, false);
  for (std::size_t r = 3; r < rows.size(); ++r) {
    const auto& row = rows[r];
    expect_arity(row, 3, source);
    auto a = pos.find(row.fields[0]);
    auto b = pos.find(row.fields[1]);
    if (a == pos.end()) throw ParseError(source, row.line, 1, "id not in header: " + row.fields[0]);
    if (b == pos.end()) throw ParseError(source, row.line, 2, "id not in header: " + row.fields[1]);
    std::size_t i = a->second, j = b->second;
    if (i == j) throw ParseError(source, row.line, 2, "self pair");
    if (i > j) std::swap(i, j);
    const std::size_t k = condensed_index(i, j, n);
    if (filled[k]) throw ParseError(source, row.line, 0, "duplicate pair");
    if (!csv::parse_double(row.fields[2], values[k]))
      throw ParseError(source, row.line, 3, "unparseable value \"" + row.fields[2] + "\"");
    filled[k] = true;
  }
  return SimilarityMatrix(std::move(ids), std::move(values), method, scale);
}

SimilarityMatrix read_full(const std::vector<csv::Row>& rows, const std::string& source) {
  if (rows.empty()) throw ParseError(source, 0, 0, "empty matrix file");
  const auto& header = rows.front().fields;
  if (header.empty() || !header[0].empty())
    throw ParseError(source, rows.front().line, 1, "full matrix header must start with an empty cell");
  std::vector<std::string> ids(header.begin() + 1, header.end());
  const std::size_t n = ids.size();
  if (rows.size() != n + 1) {
    throw ValidationError(source + ": header lists " + std::to_string(n) +
                          " stimuli but file has " + std::to_string(rows.size() - 1) + " rows");
  }
  std::vector<std::vector<std::optional<double>>> cells(n, std::vector<std::optional<double>>(n));
  bool unit_diag = true;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = rows[i + 1];
    expect_arity(row, n + 1, source);
    if (row.fields[0] != ids[i])
      throw ParseError(source, row.line, 1, "row label does not match header order");
    for (std::size_t j = 0; j < n; ++j) {
      const std::string& f = row.fields[j + 1];
      if (i == j) {
        if (csv::trim(f) != "1") unit_diag = false;
        continue;
      }
      double v;
      if (!csv::parse_double(f, v))
        throw ParseError(source, row.line, j + 2, "unparseable value \"" + f + "\"");
      cells[i][j] = v;
    }
  }
  std::vector<double> values(pair_count(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (*cells[i][j] != *cells[j][i]) {
        throw ValidationError(source + ": asymmetric cells (" + ids[i] + "," + ids[j] + ")");
      }
      values[condensed_index(i, j, n)] = *cells[i][j];
    }
  }
  return SimilarityMatrix(std::move(ids), std::move(values), "",
                          unit_diag && n > 0 ? Scale::unit : Scale::raw);
}

}  // namespace

void write_matrix(const SimilarityMatrix& m, std::ostream& out, MatrixFormat format) {
  const auto& ids = m.ids();
  const std::size_t n = ids.size();
  switch (format) {
    case MatrixFormat::condensed_csv: {
      csv::write_row(out, {"method", "scale", "ids"});
      csv::write_row(out, {m.method(), std::string(to_string(m.scale())), join_ids(ids)});
      csv::write_row(out, {"id_a", "id_b", "value"});
      std::size_t k = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
          csv::write_row(out, {ids[i], ids[j], csv::format_double(m.values()[k++])});
      break;
    }
    case MatrixFormat::full_csv: {
      std::vector<std::string> header{""};
      header.insert(header.end(), ids.begin(), ids.end());
      csv::write_row(out, header);
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::string> row{ids[i]};
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j)
            row.emplace_back(m.scale() == Scale::unit ? "1" : "");
          else
            row.push_back(csv::format_double(m.at(i, j)));
        }
        csv::write_row(out, row);
      }
      break;
    }
    case MatrixFormat::json: {
      json j;
      j["method"] = m.method();
      j["scale"] = std::string(to_string(m.scale()));
      j["stimulus_ids"] = ids;
      j["values"] = m.values();
      out << j.dump() << '\n';
      break;
    }
  }
}

void write_matrix(const SimilarityMatrix& m, const std::string& path, MatrixFormat format) {
  std::ostringstream buf;
  write_matrix(m, buf, format);
  write_text_file(path, buf.str());
}

SimilarityMatrix read_matrix_text(std::string_view text, const std::string& source) {
  auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) throw ParseError(source, 0, 0, "empty matrix file");
  if (text[first] == '{') {
    json j;
    try {
      j = json::parse(text);
      return SimilarityMatrix(j.at("stimulus_ids").get<std::vector<std::string>>(),
                              j.at("values").get<std::vector<double>>(),
                              j.value("method", std::string{}),
                              parse_scale(j.value("scale", std::string("raw"))));
    } catch (const json::exception& e) {
      throw ParseError(source, 0, 0, std::string("invalid matrix json: ") + e.what());
    }
  }
  auto rows = csv::parse(text, source);
  if (!rows.empty() && rows[0].fields == std::vector<std::string>{"method", "scale", "ids"})
    return read_condensed(rows, source);
  return read_full(rows, source);
}

SimilarityMatrix read_matrix(const std::string& path) {
  return read_matrix_text(read_text_file(path), path);
}

// ---------------------------------------------------------------------------
// Dataset files

Format parse_format(std::string_view s) {
  if (s == "stimuli-csv") return Format::stimuli_csv;
  if (s == "judgments-csv") return Format::judgments_csv;
  if (s == "captions-csv") return Format::captions_csv;
  if (s == "chains-json") return Format::chains_json;
  throw ValidationError("unknown dataset format \"" + std::string(s) + "\"");
}

std::vector<std::string> Dataset::stimulus_ids() const {
  std::vector<std::string> out;
  out.reserve(stimuli.size());
  for (const auto& s : stimuli) out.push_back(s.id);
  return out;
}

const Stimulus* Dataset::find_stimulus(std::string_view id) const {
  for (const auto& s : stimuli)
    if (s.id == id) return &s;
  return nullptr;
}

const TagChain* Dataset::find_chain(std::string_view id) const {
  for (const auto& c : chains)
    if (c.stimulus_id == id) return &c;
  return nullptr;
}

const CaptionSet* Dataset::find_captions(std::string_view id) const {
  for (const auto& c : captions)
    if (c.stimulus_id == id) return &c;
  return nullptr;
}

std::vector<Stimulus> parse_stimuli(std::string_view text, const std::string& source) {
  auto rows = csv::parse(text, source);
  expect_header(rows, {"id", "modality", "uri", "label"}, source);
  std::vector<Stimulus> out;
  std::set<std::string> seen;
  std::optional<Modality> dataset_modality;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    expect_arity(row, 4, source);
    Stimulus s;
    s.id = std::string(csv::trim(row.fields[0]));
    check_id(s.id, source, row.line, 1);
    try {
      s.modality = parse_modality(row.fields[1]);
    } catch (const ValidationError& e) {
      throw ParseError(source, row.line, 2, e.what());
    }
    if (dataset_modality && *dataset_modality != s.modality)
      throw ParseError(source, row.line, 2, "modality differs from the rest of the dataset");
    dataset_modality = s.modality;
    s.uri = row.fields[2];
    if (!row.fields[3].empty()) s.label = row.fields[3];
    if (!seen.insert(s.id).second)
      throw ParseError(source, row.line, 1, "duplicate stimulus id \"" + s.id + "\"");
    out.push_back(std::move(s));
  }
  return out;
}

JudgmentSet parse_judgments(std::string_view text, const std::string& source) {
  auto rows = csv::parse(text, source);
  expect_header(rows, {"id_a", "id_b", "rater", "value", "is_repeat"}, source);
  JudgmentSet out;
  out.dataset_id = source;
  out.records.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    expect_arity(row, 5, source);
    std::string a(csv::trim(row.fields[0]));
    std::string b(csv::trim(row.fields[1]));
    check_id(a, source, row.line, 1);
    check_id(b, source, row.line, 2);
    if (a == b) throw ParseError(source, row.line, 2, "pair of identical stimulus ids");
    long long v;
    if (!csv::parse_int(row.fields[3], v))
      throw ParseError(source, row.line, 4, "unparseable rating \"" + row.fields[3] + "\"");
    if (v < kMinRating || v > kMaxRating)
      throw ParseError(source, row.line, 4, "value out of range [0,6]: " + std::to_string(v));
    bool rep;
    if (!parse_bool(row.fields[4], rep))
      throw ParseError(source, row.line, 5, "is_repeat must be true/false");
    out.records.push_back(JudgmentRecord{StimulusPair::of(std::move(a), std::move(b)),
                                         std::string(csv::trim(row.fields[2])),
                                         static_cast<int>(v), rep});
  }
  return out;
}

std::vector<CaptionSet> parse_captions(std::string_view text, const std::string& source) {
  auto rows = csv::parse(text, source);
  expect_header(rows, {"stimulus_id", "rater", "text"}, source);
  std::vector<CaptionSet> out;
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    expect_arity(row, 3, source);
    std::string id(csv::trim(row.fields[0]));
    check_id(id, source, row.line, 1);
    auto [it, fresh] = pos.emplace(id, out.size());
    if (fresh) out.push_back(CaptionSet{id, {}});
    Caption c{row.fields[2], row.fields[1], meets_caption_rule(row.fields[2])};
    out[it->second].captions.push_back(std::move(c));
  }
  return out;
}

// chains-json ---------------------------------------------------------------

static json chain_to_json(const TagChain& c) {
  json iters = json::array();
  for (const auto& it : c.iterations) {
    json ratings = json::array();
    for (const auto& [tag, stars] : it.ratings) ratings.push_back({{"tag", tag}, {"stars", stars}});
    iters.push_back({{"participant", it.participant},
                     {"ratings", ratings},
                     {"flags", it.flags},
                     {"new_tags", it.new_tags}});
  }
  json tags = json::array();
  for (const auto& t : c.tags) {
    json ratings = json::array();
    for (const auto& r : t.ratings)
      ratings.push_back({{"participant", r.participant}, {"stars", r.stars}, {"iteration", r.iteration}});
    json flags = json::array();
    for (const auto& f : t.flags)
      flags.push_back({{"participant", f.participant}, {"iteration", f.iteration}});
    tags.push_back({{"text", t.text},
                    {"author", t.author},
                    {"created_iteration", t.created_iteration},
                    {"ratings", ratings},
                    {"flags", flags},
                    {"removed", t.removed}});
  }
  return {{"stimulus_id", c.stimulus_id}, {"iterations", iters}, {"tags", tags}};
}

static TagChain chain_from_json(const json& j) {
  TagChain c;
  c.stimulus_id = j.at("stimulus_id").get<std::string>();
  for (const auto& it : j.at("iterations")) {
    IterationRecord rec;
    rec.participant = it.at("participant").get<std::string>();
    for (const auto& r : it.value("ratings", json::array()))
      rec.ratings.emplace_back(r.at("tag").get<std::string>(), r.at("stars").get<int>());
    rec.flags = it.value("flags", std::vector<std::string>{});
    rec.new_tags = it.value("new_tags", std::vector<std::string>{});
    c.iterations.push_back(std::move(rec));
  }
  for (const auto& t : j.at("tags")) {
    TagState s;
    s.text = t.at("text").get<std::string>();
    s.author = t.value("author", std::string{});
    s.created_iteration = t.value("created_iteration", 0);
    for (const auto& r : t.value("ratings", json::array()))
      s.ratings.push_back({r.value("participant", std::string{}), r.at("stars").get<int>(),
                           r.value("iteration", 0)});
    for (const auto& f : t.value("flags", json::array()))
      s.flags.push_back({f.value("participant", std::string{}), f.value("iteration", 0)});
    s.removed = t.value("removed", false);
    c.tags.push_back(std::move(s));
  }
  return c;
}

std::vector<TagChain> parse_chains(std::string_view text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // byte offset only; map it to a line/column
    std::size_t line = 1, col = 1;
    for (std::size_t k = 0; k + 1 < e.byte && k < text.size(); ++k) {
      if (text[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(source, line, col, "invalid json");
  }
  const json& arr = doc.is_object() ? doc.at("chains") : doc;
  std::vector<TagChain> out;
  std::set<std::string> seen;
  for (std::size_t k = 0; k < arr.size(); ++k) {
    TagChain c;
    try {
      c = chain_from_json(arr[k]);
    } catch (const json::exception& e) {
      throw ParseError(source, 0, 0, "chain #" + std::to_string(k) + ": " + e.what());
    }
    validate_chain(c);
    if (!seen.insert(c.stimulus_id).second)
      throw ValidationError(source + ": duplicate chain for stimulus \"" + c.stimulus_id + "\"");
    out.push_back(std::move(c));
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("write failed: " + path);
}

Dataset load_dataset(const std::string& path, Format format) {
  if (!std::filesystem::exists(path)) throw Error("no such file: " + path);
  const std::string text = read_text_file(path);
  Dataset d;
  switch (format) {
    case Format::stimuli_csv: d.stimuli = parse_stimuli(text, path); break;
    case Format::judgments_csv: d.judgments = parse_judgments(text, path); break;
    case Format::captions_csv: d.captions = parse_captions(text, path); break;
    case Format::chains_json: d.chains = parse_chains(text, path); break;
  }
  return d;
}

void validate_references(const Dataset& d) {
  std::unordered_set<std::string> ids;
  for (const auto& s : d.stimuli) ids.insert(s.id);
  auto check = [&](const std::string& id, const char* what) {
    if (!ids.count(id))
      throw ValidationError(std::string(what) + " references unknown stimulus \"" + id + "\"");
  };
  if (d.judgments)
    for (const auto& r : d.judgments->records) {
      check(r.pair.first, "judgment");
      check(r.pair.second, "judgment");
    }
  for (const auto& c : d.captions) check(c.stimulus_id, "caption");
  for (const auto& c : d.chains) check(c.stimulus_id, "tag chain");
}

Dataset load_dataset_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw Error("not a dataset directory: " + dir);
  Dataset d = load_dataset((root / "stimuli.csv").string(), Format::stimuli_csv);
  if (fs::exists(root / "judgments.csv")) {
    d.judgments = load_dataset((root / "judgments.csv").string(), Format::judgments_csv).judgments;
    d.judgments->dataset_id = root.filename().string();
  }
  if (fs::exists(root / "captions.csv"))
    d.captions = load_dataset((root / "captions.csv").string(), Format::captions_csv).captions;
  if (fs::exists(root / "chains.json"))
    d.chains = load_dataset((root / "chains.json").string(), Format::chains_json).chains;
  validate_references(d);
  return d;
}

void write_stimuli(std::ostream& out, std::span<const Stimulus> stimuli) {
  csv::write_row(out, {"id", "modality", "uri", "label"});
  for (const auto& s : stimuli)
    csv::write_row(out, {s.id, std::string(to_string(s.modality)), s.uri, s.label.value_or("")});
}

void write_judgments(std::ostream& out, const JudgmentSet& judgments) {
  csv::write_row(out, {"id_a", "id_b", "rater", "value", "is_repeat"});
  for (const auto& r : judgments.records)
    csv::write_row(out, {r.pair.first, r.pair.second, r.rater, std::to_string(r.value),
                         r.is_repeat ? "true" : "false"});
}

void write_captions(std::ostream& out, std::span<const CaptionSet> captions) {
  csv::write_row(out, {"stimulus_id", "rater", "text"});
  for (const auto& set : captions)
    for (const auto& c : set.captions) csv::write_row(out, {set.stimulus_id, c.rater, c.text});
}

void write_chains(std::ostream& out, std::span<const TagChain> chains) {
  json arr = json::array();
  for (const auto& c : chains) arr.push_back(chain_to_json(c));
  out << json{{"chains", arr}}.dump(2) << '\n';
}

}  // namespace stepsim::corpus
