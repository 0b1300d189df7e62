#include "stepsim/wfa.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <spdlog/spdlog.h>
#include <unordered_map>

#include "stepsim/csv.hpp"
#include "stepsim/error.hpp"
#include "stepsim/pairwise.hpp"

namespace stepsim::wfa {

using corpus::Scale;
using corpus::SimilarityMatrix;

// ---------------------------------------------------------------------------
// Bag of words

std::size_t BagOfWords::doc_length(std::size_t doc) const {
  std::size_t n = 0;
  for (const auto& [t, c] : counts.at(doc)) n += c;
  return n;
}

std::uint32_t BagOfWords::count(std::size_t doc, std::size_t term) const {
  const auto& row = counts.at(doc);
  auto it = std::lower_bound(row.begin(), row.end(), term,
                             [](const auto& e, std::size_t t) { return e.first < t; });
  return it != row.end() && it->first == term ? it->second : 0;
}

std::vector<std::size_t> BagOfWords::document_frequencies() const {
  std::vector<std::size_t> df(vocabulary.size(), 0);
  for (const auto& row : counts)
    for (const auto& [t, c] : row) ++df[t];
  return df;
}

double BagOfWords::average_length() const {
  if (counts.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t d = 0; d < counts.size(); ++d) total += static_cast<double>(doc_length(d));
  return total / static_cast<double>(counts.size());
}

BagOfWords make_bag(std::span<const WordDocument> docs) {
  BagOfWords bag;
  std::set<std::string> vocab;
  for (const auto& d : docs) vocab.insert(d.words.begin(), d.words.end());
  bag.vocabulary.assign(vocab.begin(), vocab.end());
  std::unordered_map<std::string, std::uint32_t> index;
  for (std::uint32_t k = 0; k < bag.vocabulary.size(); ++k) index.emplace(bag.vocabulary[k], k);
  for (const auto& d : docs) {
    bag.doc_ids.push_back(d.stimulus_id);
    std::map<std::uint32_t, std::uint32_t> c;
    for (const auto& w : d.words) ++c[index.at(w)];
    bag.counts.emplace_back(c.begin(), c.end());
  }
  return bag;
}

// ---------------------------------------------------------------------------
// Preprocessing

const std::vector<std::string>& default_stopwords() {
  static const std::vector<std::string> words = {
      "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "you're", "you've",
      "you'll", "you'd", "your", "yours", "yourself", "yourselves", "he", "him", "his", "himself",
      "she", "she's", "her", "hers", "herself", "it", "it's", "its", "itself", "they", "them",
      "their", "theirs", "themselves", "what", "which", "who", "whom", "this", "that", "that'll",
      "these", "those", "am", "is", "are", "was", "were", "be", "been", "being", "have", "has",
      "had", "having", "do", "does", "did", "doing", "a", "an", "the", "and", "but", "if", "or",
      "because", "as", "until", "while", "of", "at", "by", "for", "with", "about", "against",
      "between", "into", "through", "during", "before", "after", "above", "below", "to", "from",
      "up", "down", "in", "out", "on", "off", "over", "under", "again", "further", "then", "once",
      "here", "there", "when", "where", "why", "how", "all", "any", "both", "each", "few", "more",
      "most", "other", "some", "such", "no", "nor", "not", "only", "own", "same", "so", "than",
      "too", "very", "s", "t", "can", "will", "just", "don", "don't", "should", "should've", "now",
      "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren", "aren't", "couldn", "couldn't", "didn",
      "didn't", "doesn", "doesn't", "hadn", "hadn't", "hasn", "hasn't", "haven", "haven't", "isn",
      "isn't", "ma", "mightn", "mightn't", "mustn", "mustn't", "needn", "needn't", "shan",
      "shan't", "shouldn", "shouldn't", "wasn", "wasn't", "weren", "weren't", "won", "won't",
      "wouldn", "wouldn't", "youre", "youve", "youll", "youd", "shes", "thatll", "dont",
      "shouldve", "arent", "couldnt", "didnt", "doesnt", "hadnt", "hasnt", "havent", "isnt",
      "mightnt", "mustnt", "neednt", "shant", "shouldnt", "wasnt", "werent", "wont", "wouldnt"};
  return words;
}

const std::vector<LemmaRule>& default_lemma_rules() {
  // Identity rules protect endings that would otherwise match a shorter rule.
  static const std::vector<LemmaRule> rules = {
      {"sses", "ss"}, {"ss", "ss"},   {"ies", "y"},    {"us", "us"},   {"is", "is"},
      {"s", ""},      {"bbing", "b"}, {"dding", "d"},  {"gging", "g"}, {"mming", "m"},
      {"nning", "n"}, {"pping", "p"}, {"tting", "t"},  {"ing", ""},
      {"bbed", "b"},  {"dded", "d"},  {"gged", "g"},   {"mmed", "m"},  {"nned", "n"},
      {"pped", "p"},  {"tted", "t"},  {"ied", "y"},    {"eed", "eed"}, {"ed", ""},
  };
  return rules;
}

PreprocessConfig PreprocessConfig::defaults() {
  PreprocessConfig cfg;
  cfg.stopwords.insert(default_stopwords().begin(), default_stopwords().end());
  cfg.lemma_rules = default_lemma_rules();
  return cfg;
}

void PreprocessConfig::validate() const {
  if (min_len == 0 || min_len > max_len)
    throw ValidationError("token length bounds must satisfy 0 < min_len <= max_len");
}

std::unordered_set<std::string> load_stopwords(const std::string& path) {
  std::unordered_set<std::string> out;
  const std::string text = corpus::read_text_file(path);
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line(text.data() + pos, (nl == std::string::npos ? text.size() : nl) - pos);
    pos = nl == std::string::npos ? text.size() : nl + 1;
    line = csv::trim(line);
    if (line.empty() || line.front() == '#') continue;
    std::string w(line);
    for (char& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.insert(std::move(w));
  }
  return out;
}

std::vector<LemmaRule> parse_lemma_rules(std::string_view text, const std::string& source) {
  std::vector<LemmaRule> rules;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, (nl == std::string_view::npos ? text.size() : nl) - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    line = csv::trim(line);
    if (line.empty() || line.front() == '#') continue;
    std::size_t arrow = line.find("->");
    std::size_t arrow_len = 2;
    if (arrow == std::string_view::npos) {
      arrow = line.find("\xE2\x86\x92");  // U+2192
      arrow_len = 3;
    }
    if (arrow == std::string_view::npos)
      throw ParseError(source, line_no, 0, "expected \"suffix->replacement\"");
    LemmaRule r{std::string(csv::trim(line.substr(0, arrow))),
                std::string(csv::trim(line.substr(arrow + arrow_len)))};
    if (r.suffix.empty()) throw ParseError(source, line_no, 1, "empty suffix");
    rules.push_back(std::move(r));
  }
  return rules;
}

std::vector<LemmaRule> load_lemma_rules(const std::string& path) {
  return parse_lemma_rules(corpus::read_text_file(path), path);
}

std::string lemmatize(std::string word, const PreprocessConfig& cfg) {
  // Bounded so a cyclic rule table cannot loop forever.
  for (int round = 0; round < 8; ++round) {
    const LemmaRule* best = nullptr;
    for (const auto& r : cfg.lemma_rules) {
      if (r.suffix.size() > word.size()) continue;
      if (word.compare(word.size() - r.suffix.size(), r.suffix.size(), r.suffix) != 0) continue;
      if (!best || r.suffix.size() > best->suffix.size()) best = &r;
    }
    if (!best || best->suffix == best->replacement) break;
    std::string next = word.substr(0, word.size() - best->suffix.size()) + best->replacement;
    if (next.size() < cfg.min_lemma_len || next == word) break;
    word = std::move(next);
  }
  return word;
}

namespace {

std::string strip_punct_lower(std::string_view token) {
  std::string out;
  out.reserve(token.size());
  for (char c : token) {
    auto u = static_cast<unsigned char>(c);
    if (u < 128 && std::ispunct(u)) continue;
    out.push_back(static_cast<char>(std::tolower(u)));
  }
  return out;
}

}  // namespace

std::vector<std::string> basic_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& w : corpus::split_words(text)) {
    auto t = strip_punct_lower(w);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

WordDocument build_tag_document(const corpus::TagChain& chain, TagTokens mode) {
  WordDocument doc{chain.stimulus_id, {}};
  for (const auto& tag : chain.tags) {
    int last_flag = -1;
    for (const auto& f : tag.flags) last_flag = std::max(last_flag, f.iteration);
    if (last_flag >= 0) {
      bool rated_later = std::any_of(tag.ratings.begin(), tag.ratings.end(),
                                     [&](const auto& r) { return r.iteration > last_flag; });
      if (!rated_later) continue;
    }
    const int reps = tag.star_sum();
    std::vector<std::string> tokens;
    if (mode == TagTokens::whole)
      tokens.push_back(tag.text);
    else
      tokens = corpus::split_words(tag.text);
    for (int r = 0; r < reps; ++r) doc.words.insert(doc.words.end(), tokens.begin(), tokens.end());
  }
  if (doc.words.empty())
    throw DomainError("no qualifying tag for the document of stimulus " + chain.stimulus_id);
  return doc;
}

WordDocument build_caption_document(const corpus::CaptionSet& captions) {
  WordDocument doc{captions.stimulus_id, {}};
  for (const auto& c : captions.captions) {
    auto t = basic_tokens(c.text);
    doc.words.insert(doc.words.end(), t.begin(), t.end());
  }
  return doc;
}

WordDocument preprocess(const WordDocument& doc, const PreprocessConfig& cfg) {
  cfg.validate();
  WordDocument out{doc.stimulus_id, {}};
  for (const auto& raw : doc.words) {
    for (const auto& piece : corpus::split_words(raw)) {
      std::string token = strip_punct_lower(piece);
      if (token.empty()) continue;
      if (cfg.stopwords.count(token)) continue;
      std::string lemma = lemmatize(token, cfg);
      if (cfg.stopwords.count(lemma)) continue;
      if (lemma.size() < cfg.min_len || lemma.size() > cfg.max_len) continue;
      out.words.push_back(std::move(lemma));
    }
  }
  return out;
}

std::vector<WordDocument> drop_infrequent(std::vector<WordDocument> docs, std::size_t min_doc_presence) {
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& d : docs) {
    std::set<std::string> uniq(d.words.begin(), d.words.end());
    for (const auto& w : uniq) ++df[w];
  }
  for (auto& d : docs) {
    std::erase_if(d.words, [&](const std::string& w) { return df[w] < min_doc_presence; });
  }
  return docs;
}

std::vector<WordDocument> preprocess_corpus(std::span<const WordDocument> docs,
                                            const PreprocessConfig& cfg) {
  std::vector<WordDocument> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(preprocess(d, cfg));
  out = drop_infrequent(std::move(out), cfg.min_doc_presence);
  for (const auto& d : out)
    if (d.words.empty()) spdlog::warn("document for stimulus {} is empty after preprocessing", d.stimulus_id);
  return out;
}

// ---------------------------------------------------------------------------
// Scores

namespace {

std::unordered_map<std::string_view, std::size_t> counts_of(const WordDocument& d) {
  std::unordered_map<std::string_view, std::size_t> c;
  for (const auto& w : d.words) ++c[w];
  return c;
}

void require_words(const WordDocument& a, const WordDocument& b) {
  if (a.words.empty() || b.words.empty()) throw DomainError("empty word document");
}

}  // namespace

double cooccurrence(const WordDocument& a, const WordDocument& b) {
  require_words(a, b);
  const auto ca = counts_of(a);
  const auto cb = counts_of(b);
  const auto& small = ca.size() <= cb.size() ? ca : cb;
  const auto& large = ca.size() <= cb.size() ? cb : ca;
  double matches = 0.0;
  for (const auto& [w, n] : small) {
    auto it = large.find(w);
    if (it != large.end()) matches += static_cast<double>(n) * static_cast<double>(it->second);
  }
  return matches / (static_cast<double>(a.words.size()) * static_cast<double>(b.words.size()));
}

double cooccurrence_rep(const WordDocument& a, const WordDocument& b) { return cooccurrence(a, b); }

double rouge1(const WordDocument& candidate, const WordDocument& reference) {
  require_words(candidate, reference);
  const auto cc = counts_of(candidate);
  const auto cr = counts_of(reference);
  double overlap = 0.0;
  for (const auto& [w, n] : cc) {
    auto it = cr.find(w);
    if (it != cr.end()) overlap += static_cast<double>(std::min(n, it->second));
  }
  const double recall = overlap / static_cast<double>(reference.words.size());
  const double precision = overlap / static_cast<double>(candidate.words.size());
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double rouge1_symmetric(const WordDocument& a, const WordDocument& b) {
  return 0.5 * (rouge1(a, b) + rouge1(b, a));
}

namespace {

struct Bm25Stats {
  std::vector<double> idf;
  std::vector<double> length;
  double avgdl = 0.0;
};

Bm25Stats bm25_stats(const BagOfWords& corpus) {
  if (corpus.num_docs() == 0) throw DomainError("empty corpus");
  Bm25Stats s;
  const auto df = corpus.document_frequencies();
  const double n = static_cast<double>(corpus.num_docs());
  s.idf.resize(df.size());
  for (std::size_t t = 0; t < df.size(); ++t) {
    const double d = static_cast<double>(df[t]);
    s.idf[t] = std::log((n - d + 0.5) / (d + 0.5) + 1.0);
  }
  s.length.resize(corpus.num_docs());
  for (std::size_t d = 0; d < corpus.num_docs(); ++d) s.length[d] = static_cast<double>(corpus.doc_length(d));
  s.avgdl = corpus.average_length();
  if (!(s.avgdl > 0.0)) throw DomainError("corpus has zero average document length");
  return s;
}

double bm25_score(const BagOfWords& corpus, const Bm25Stats& s, std::size_t query, std::size_t target,
                  const Bm25Params& p) {
  const auto& q = corpus.counts[query];
  const auto& t = corpus.counts[target];
  const double norm = 1.0 - p.b + p.b * s.length[target] / s.avgdl;
  double score = 0.0;
  // both rows are sorted by term index
  std::size_t i = 0, j = 0;
  while (i < q.size() && j < t.size()) {
    if (q[i].first < t[j].first) {
      ++i;
    } else if (t[j].first < q[i].first) {
      ++j;
    } else {
      const double tf = static_cast<double>(t[j].second) / norm;
      score += s.idf[q[i].first] * ((p.k1 + 1.0) * tf / (p.k1 + tf) + p.delta);
      ++i;
      ++j;
    }
  }
  return score;
}

}  // namespace

double bm25plus(const BagOfWords& corpus, std::size_t query, std::size_t target, Bm25Params p) {
  const auto s = bm25_stats(corpus);
  if (query >= corpus.num_docs() || target >= corpus.num_docs())
    throw std::out_of_range("document index out of range");
  return bm25_score(corpus, s, query, target, p);
}

SimilarityMatrix bm25plus_matrix(const BagOfWords& corpus, Bm25Params p, unsigned threads) {
  const auto s = bm25_stats(corpus);
  auto values = pairwise_condensed(
      corpus.num_docs(),
      [&](std::size_t i, std::size_t j) {
        return 0.5 * (bm25_score(corpus, s, i, j, p) + bm25_score(corpus, s, j, i, p));
      },
      threads);
  return SimilarityMatrix(corpus.doc_ids, std::move(values), "wfa-bm25s", Scale::raw);
}

SimilarityMatrix tfidf_cosine(const BagOfWords& corpus, unsigned threads) {
  if (corpus.num_docs() == 0) throw DomainError("empty corpus");
  const auto df = corpus.document_frequencies();
  const double n = static_cast<double>(corpus.num_docs());
  std::vector<std::vector<std::pair<std::uint32_t, double>>> weights(corpus.num_docs());
  std::vector<double> norms(corpus.num_docs(), 0.0);
  for (std::size_t d = 0; d < corpus.num_docs(); ++d) {
    for (const auto& [t, c] : corpus.counts[d]) {
      const double w = static_cast<double>(c) * std::log(n / static_cast<double>(df[t]));
      weights[d].emplace_back(t, w);
      norms[d] += w * w;
    }
    norms[d] = std::sqrt(norms[d]);
    if (norms[d] == 0.0)
      spdlog::warn("tf-idf vector of {} is all zeros; it scores 0 against every document",
                   corpus.doc_ids[d]);
  }
  auto values = pairwise_condensed(
      corpus.num_docs(),
      [&](std::size_t a, std::size_t b) {
        if (norms[a] == 0.0 || norms[b] == 0.0) return 0.0;
        const auto& u = weights[a];
        const auto& v = weights[b];
        double dot = 0.0;
        std::size_t i = 0, j = 0;
        while (i < u.size() && j < v.size()) {
          if (u[i].first < v[j].first) {
            ++i;
          } else if (v[j].first < u[i].first) {
            ++j;
          } else {
            dot += u[i].second * v[j].second;
            ++i;
            ++j;
          }
        }
        return dot / (norms[a] * norms[b]);
      },
      threads);
  return SimilarityMatrix(corpus.doc_ids, std::move(values), "wfa-tfidf", Scale::unit);
}

// ---------------------------------------------------------------------------
// Fuzzy matching

namespace {

std::size_t lcs_length(std::string_view a, std::string_view b, std::vector<std::size_t>& row) {
  row.assign(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = a[i - 1] == b[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return row[b.size()];
}

}  // namespace

int partial_ratio(std::string_view a, std::string_view b) {
  if (a.empty() || b.empty()) return 0;
  std::string_view s = a.size() <= b.size() ? a : b;
  std::string_view l = a.size() <= b.size() ? b : a;
  std::vector<std::size_t> row;
  std::size_t best = 0;
  for (std::size_t start = 0; start + s.size() <= l.size(); ++start) {
    best = std::max(best, lcs_length(s, l.substr(start, s.size()), row));
    if (best == s.size()) break;
  }
  const double ratio = 100.0 * 2.0 * static_cast<double>(best) / (2.0 * static_cast<double>(s.size()));
  return static_cast<int>(std::lround(ratio));
}

double mean_repetition_score(std::string_view candidate, std::span<const std::string> history) {
  if (history.empty()) throw DomainError("repetition score needs a nonempty history");
  double total = 0.0;
  for (const auto& h : history) total += partial_ratio(candidate, h);
  return total / static_cast<double>(history.size());
}

}  // namespace stepsim::wfa
