#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stepsim/corpus.hpp"
#include "stepsim/embeddings.hpp"

namespace stepsim::textsim {

using embeddings::Vector;

/// Active tags of one chain iteration for a stimulus. Duplicates are kept
/// (multi-set semantics).
struct TagSet {
  std::string stimulus_id;
  std::vector<std::string> tags;
};

/// A tag set after embedding lookup. `vectors` holds one entry per tag that
/// resolved; missing tags are listed in `resolved` but contribute nothing.
struct ResolvedTagSet {
  std::string stimulus_id;
  std::vector<embeddings::ResolvedTag> resolved;
  std::vector<Vector> vectors;
};

ResolvedTagSet resolve(const TagSet& tags, const embeddings::EmbeddingTable& table, bool split,
                       const embeddings::SpellCorrector& corrector);

struct CaptionEmbeddingSet {
  std::string stimulus_id;
  std::vector<Vector> vectors;  // one per caption
};

enum class OverlapNormalization {
  total_tags,  // count / (T_A + T_B)
  pair_count,  // count / (T_A * T_B)
};

/// Number of cross pairs whose vectors differ by less than theta in every
/// component, normalized as requested.
double overlap_similarity(std::span<const Vector> a, std::span<const Vector> b, double theta = 0.1,
                          OverlapNormalization norm = OverlapNormalization::total_tags);

/// min(N_A, N_B) / (T_A + T_B - max(N_A, N_B)), where N_A counts the tags of
/// a with cosine > theta to some tag of b.
double quantized_similarity(std::span<const Vector> a, std::span<const Vector> b,
                            double theta = 0.7);

/// Cosine between the arithmetic means of the two sets.
double mean_similarity(std::span<const Vector> a, std::span<const Vector> b);

/// Cosine between per-stimulus mean caption vectors.
double caption_similarity(const CaptionEmbeddingSet& a, const CaptionEmbeddingSet& b);

inline constexpr std::string_view kCaptionPrefix = "This is an image of ";

/// Prefix followed by the tags joined with ", " in the given order.
std::string tags_to_caption(const TagSet& tags, std::string_view prefix = kCaptionPrefix);

enum class SelectMode { last_iteration, first_iteration, single_top, label };
SelectMode parse_select_mode(std::string_view s);

/// Tag-set selectors for ablations:
///  last-iteration  - active tags after the final iteration
///  first-iteration - tags added in the first iteration
///  single-top      - one seeded-random tag among the active tags with the
///                    highest mean star rating
///  label           - the stimulus' dataset class label
/// Throws DomainError when the selection is empty.
TagSet select_tags(const corpus::TagChain& chain, SelectMode mode, std::uint64_t seed = 0,
                   const corpus::Stimulus* stimulus = nullptr);

enum class TagMethod { overlap, quantized, mean };

/// Pairwise matrix over tag sets in the given order. Mean vectors are
/// computed once per set; a set without resolved vectors throws DomainError
/// naming its stimulus.
corpus::SimilarityMatrix tag_matrix(std::span<const ResolvedTagSet> sets, TagMethod method,
                                    std::string method_name, unsigned threads = 0);

/// Pairwise cosine of per-stimulus mean caption vectors.
corpus::SimilarityMatrix caption_matrix(std::span<const CaptionEmbeddingSet> sets,
                                        std::string method_name, unsigned threads = 0);

}  // namespace stepsim::textsim
