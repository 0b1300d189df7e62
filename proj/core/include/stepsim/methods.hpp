#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stepsim/corpus.hpp"
#include "stepsim/embeddings.hpp"
#include "stepsim/textsim.hpp"
#include "stepsim/wfa.hpp"

namespace stepsim::methods {

/// Names accepted by compute(), in documentation order.
const std::vector<std::string>& names();
bool is_known(std::string_view name);
/// True for methods that read a word embedding table.
bool needs_word_table(std::string_view name);

enum class TextSource { tags, captions };
TextSource parse_text_source(std::string_view s);

struct Inputs {
  const corpus::Dataset* dataset = nullptr;
  /// Word table for tag methods; caption table for captions-mean (keys
  /// "<stimulus>/<k>" or "<stimulus>"); stimulus table for tags-to-caption
  /// and dnn-cosine.
  const embeddings::EmbeddingTable* table = nullptr;
  const embeddings::FrequencyList* frequencies = nullptr;
  textsim::SelectMode selector = textsim::SelectMode::last_iteration;
  TextSource source = TextSource::tags;
  wfa::PreprocessConfig preprocess = wfa::PreprocessConfig::defaults();
  wfa::Bm25Params bm25;
  /// Stacked method: stimulus-keyed DNN tables and an optional language table.
  std::vector<const embeddings::EmbeddingTable*> dnn;
  const embeddings::EmbeddingTable* llm = nullptr;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

/// Similarity matrix over the dataset's stimuli, in stimuli.csv order.
/// Throws ValidationError for an unknown name or missing inputs.
corpus::SimilarityMatrix compute(const std::string& name, const Inputs& in);

/// Selected tag sets per stimulus (dataset order). Stimuli without a chain
/// raise ValidationError.
std::vector<textsim::TagSet> tag_sets(const corpus::Dataset& d, textsim::SelectMode mode, std::uint64_t seed);

/// One generated caption per stimulus for the tags-to-caption method, in
/// captions.csv form (rater "tags").
std::vector<corpus::CaptionSet> tag_captions(const corpus::Dataset& d, textsim::SelectMode mode,
                                             std::uint64_t seed);

/// Per-stimulus lookup in a stimulus-keyed table; missing ids raise
/// ValidationError listing them.
std::vector<embeddings::Vector> stimulus_vectors(const embeddings::EmbeddingTable& table,
                                                 const std::vector<std::string>& ids);

}  // namespace stepsim::methods
