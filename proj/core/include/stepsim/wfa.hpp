#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "stepsim/corpus.hpp"

namespace stepsim::wfa {

/// Ordered token list for one stimulus; repetitions carry weight.
struct WordDocument {
  std::string stimulus_id;
  std::vector<std::string> words;

  friend bool operator==(const WordDocument&, const WordDocument&) = default;
};

/// Term counts over a document collection. `vocabulary` is sorted; each
/// document's counts are sparse (term index, count) pairs sorted by index.
struct BagOfWords {
  std::vector<std::string> vocabulary;
  std::vector<std::string> doc_ids;
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> counts;

  std::size_t num_docs() const noexcept { return doc_ids.size(); }
  std::size_t doc_length(std::size_t doc) const;
  std::uint32_t count(std::size_t doc, std::size_t term) const;
  std::vector<std::size_t> document_frequencies() const;
  double average_length() const;
};

BagOfWords make_bag(std::span<const WordDocument> docs);

struct LemmaRule {
  std::string suffix;
  std::string replacement;
};

struct PreprocessConfig {
  std::unordered_set<std::string> stopwords;
  std::size_t min_len = 2;
  std::size_t max_len = 15;
  /// Corpus pass keeps a term iff it occurs in at least this many documents.
  std::size_t min_doc_presence = 3;
  /// Applied longest-suffix-first, repeatedly, until no rule changes the word.
  std::vector<LemmaRule> lemma_rules;
  /// A rule only fires if the result keeps at least this many characters.
  std::size_t min_lemma_len = 3;

  /// Bundled English stopword list and suffix rules.
  static PreprocessConfig defaults();
  void validate() const;
};

const std::vector<std::string>& default_stopwords();
const std::vector<LemmaRule>& default_lemma_rules();
/// One term per line; blank lines and '#' comments ignored.
std::unordered_set<std::string> load_stopwords(const std::string& path);
/// "suffix->replacement" (or "suffix→replacement") per line; empty replacement allowed.
std::vector<LemmaRule> parse_lemma_rules(std::string_view text, const std::string& source = {});
std::vector<LemmaRule> load_lemma_rules(const std::string& path);

std::string lemmatize(std::string word, const PreprocessConfig& cfg);

/// Lowercases, removes ASCII punctuation characters, splits on whitespace.
std::vector<std::string> basic_tokens(std::string_view text);

enum class TagTokens {
  split,  // each word of a tag is its own token
  whole,  // the full tag text is one token
};

/// Rating-weighted tag document: each tag contributes its tokens once per
/// star it received across all iterations. A tag whose last flag is not
/// followed by a later rating contributes nothing. Throws DomainError when no
/// tag qualifies.
WordDocument build_tag_document(const corpus::TagChain& chain, TagTokens mode = TagTokens::split);

/// Concatenation of all captions of a stimulus, tokenized with basic_tokens.
WordDocument build_caption_document(const corpus::CaptionSet& captions);

/// Per-document pipeline: whitespace tokenization, lowercasing, punctuation
/// removal, lemmatization, stopword and length filtering.
WordDocument preprocess(const WordDocument& doc, const PreprocessConfig& cfg);

/// Corpus pass: drops terms present in fewer than `min_doc_presence` documents.
std::vector<WordDocument> drop_infrequent(std::vector<WordDocument> docs, std::size_t min_doc_presence);

/// preprocess on every document followed by drop_infrequent; empty results
/// are logged.
std::vector<WordDocument> preprocess_corpus(std::span<const WordDocument> docs,
                                            const PreprocessConfig& cfg);

/// Matching token pairs over all pairs, sum_k sum_l [w_ik == w_jl] / (|w_i||w_j|).
double cooccurrence(const WordDocument& a, const WordDocument& b);
/// Same formula over whole-tag tokens.
double cooccurrence_rep(const WordDocument& a, const WordDocument& b);

/// ROUGE-1 F-measure of candidate against reference (clipped unigram overlap).
double rouge1(const WordDocument& candidate, const WordDocument& reference);
/// Mean of both directions.
double rouge1_symmetric(const WordDocument& a, const WordDocument& b);

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
  double delta = 1.0;
};

/// BM25+ score of document `query` against document `target` in `corpus`,
/// summed over the distinct terms of the query.
double bm25plus(const BagOfWords& corpus, std::size_t query, std::size_t target, Bm25Params p = {});
/// Symmetrized pairwise BM25+ (mean of both directions).
corpus::SimilarityMatrix bm25plus_matrix(const BagOfWords& corpus, Bm25Params p = {},
                                         unsigned threads = 0);

/// Cosine of tf * ln(N/df) vectors. Documents whose weights are all zero
/// score 0 against everything (logged).
corpus::SimilarityMatrix tfidf_cosine(const BagOfWords& corpus, unsigned threads = 0);

/// Best 0..100 alignment score of the shorter string against every window
/// of the longer one with the same length: 100 * 2*LCS / (|s| + |window|),
/// rounded to the nearest integer.
int partial_ratio(std::string_view a, std::string_view b);

/// Mean partial_ratio(candidate, h) over the history.
double mean_repetition_score(std::string_view candidate, std::span<const std::string> history);

}  // namespace stepsim::wfa
