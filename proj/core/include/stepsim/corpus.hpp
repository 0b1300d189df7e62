#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace stepsim::corpus {

enum class Modality { image, audio, video };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view s);

struct Stimulus {
  std::string id;
  Modality modality = Modality::image;
  std::string uri;
  std::optional<std::string> label;

  friend bool operator==(const Stimulus&, const Stimulus&) = default;
};

/// Unordered pair of distinct stimuli, stored with first < second.
struct StimulusPair {
  std::string first;
  std::string second;

  /// Canonicalizes the order; throws ValidationError when a == b.
  static StimulusPair of(std::string a, std::string b);

  friend bool operator==(const StimulusPair&, const StimulusPair&) = default;
  friend auto operator<=>(const StimulusPair&, const StimulusPair&) = default;
};

struct JudgmentRecord {
  StimulusPair pair;
  std::string rater;
  int value = 0;  // 0 = completely dissimilar ... 6 = completely similar
  bool is_repeat = false;

  friend bool operator==(const JudgmentRecord&, const JudgmentRecord&) = default;
};

inline constexpr int kMinRating = 0;
inline constexpr int kMaxRating = 6;

struct JudgmentSet {
  std::string dataset_id;
  std::vector<JudgmentRecord> records;

  friend bool operator==(const JudgmentSet&, const JudgmentSet&) = default;
};

struct Caption {
  std::string text;
  std::string rater;
  /// False when the text breaks the collection rule (>=5 words, >=4 unique).
  /// Imported captions are kept either way.
  bool meets_length_rule = true;

  friend bool operator==(const Caption&, const Caption&) = default;
};

struct CaptionSet {
  std::string stimulus_id;
  std::vector<Caption> captions;

  friend bool operator==(const CaptionSet&, const CaptionSet&) = default;
};

inline constexpr std::size_t kMinCaptionWords = 5;
inline constexpr std::size_t kMinCaptionUniqueWords = 4;

std::vector<std::string> split_words(std::string_view text);
std::size_t count_words(std::string_view text);
/// Unique words compared case-insensitively.
std::size_t count_unique_words(std::string_view text);
bool meets_caption_rule(std::string_view text, std::size_t min_words = kMinCaptionWords,
                        std::size_t min_unique = kMinCaptionUniqueWords);

// ---------------------------------------------------------------------------
// Tag chains

struct StarRating {
  std::string participant;
  int stars = 0;       // 1..5
  int iteration = 0;   // 0-based iteration in which it was given

  friend bool operator==(const StarRating&, const StarRating&) = default;
};

struct FlagMark {
  std::string participant;
  int iteration = 0;

  friend bool operator==(const FlagMark&, const FlagMark&) = default;
};

struct TagState {
  std::string text;
  std::string author;
  int created_iteration = 0;
  std::vector<StarRating> ratings;
  std::vector<FlagMark> flags;
  bool removed = false;

  std::optional<double> mean_stars() const;
  int star_sum() const;
  std::size_t distinct_flaggers() const;

  friend bool operator==(const TagState&, const TagState&) = default;
};

struct IterationRecord {
  std::string participant;
  std::vector<std::pair<std::string, int>> ratings;  // tag text -> stars
  std::vector<std::string> flags;
  std::vector<std::string> new_tags;

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

inline constexpr int kMaxChainIterations = 20;

/// Per-stimulus adaptive annotation chain. `tags` holds every tag ever added,
/// in creation order; removed tags stay in the list with removed = true.
struct TagChain {
  std::string stimulus_id;
  std::vector<IterationRecord> iterations;
  std::vector<TagState> tags;

  /// Indices into `tags` of the tags that are not removed, in creation order.
  std::vector<std::size_t> active_indices() const;
  std::vector<std::string> active_texts() const;
  /// Index of the active tag with this text, if any.
  std::optional<std::size_t> find_active(std::string_view text) const;

  friend bool operator==(const TagChain&, const TagChain&) = default;
};

/// Throws ValidationError on: uppercase tag text, duplicate active text,
/// stars outside 1..5, more than max_iterations iterations.
void validate_chain(const TagChain& chain, int max_iterations = kMaxChainIterations);

// ---------------------------------------------------------------------------
// Similarity matrices

enum class Scale { raw, unit };
std::string_view to_string(Scale s);
Scale parse_scale(std::string_view s);

/// Number of unordered pairs among n items.
constexpr std::size_t pair_count(std::size_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

/// Slot of pair (i, j), i < j, in row-major upper-triangle order
/// (0,1), (0,2), ..., (0,n-1), (1,2), ...
constexpr std::size_t condensed_index(std::size_t i, std::size_t j, std::size_t n) {
  return i * (2 * n - i - 1) / 2 + (j - i - 1);
}

/// Inverse of condensed_index.
std::pair<std::size_t, std::size_t> condensed_pair(std::size_t k, std::size_t n);

class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;
  /// Validates value count, finiteness and id uniqueness.
  SimilarityMatrix(std::vector<std::string> ids, std::vector<double> values, std::string method,
                   Scale scale);

  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::vector<double>& values() const noexcept { return values_; }
  const std::string& method() const noexcept { return method_; }
  Scale scale() const noexcept { return scale_; }

  /// Symmetric accessor; i != j.
  double at(std::size_t i, std::size_t j) const;
  double at(std::string_view a, std::string_view b) const;
  std::optional<std::size_t> index_of(std::string_view id) const;

  void set_method(std::string method) { method_ = std::move(method); }

  friend bool operator==(const SimilarityMatrix& a, const SimilarityMatrix& b) {
    return a.ids_ == b.ids_ && a.values_ == b.values_ && a.method_ == b.method_ &&
           a.scale_ == b.scale_;
  }

 private:
  std::vector<std::string> ids_;
  std::vector<double> values_;
  std::string method_;
  Scale scale_ = Scale::raw;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AggregateOptions {
  bool include_repeats = true;
};

/// Mean rating per unordered pair over `stimulus_order`. When the order is
/// empty the sorted set of ids seen in the records is used. Throws
/// ValidationError naming the pairs that have no record.
SimilarityMatrix aggregate_judgments(const JudgmentSet& judgments,
                                     std::span<const std::string> stimulus_order = {},
                                     AggregateOptions options = {});

enum class MatrixFormat { condensed_csv, full_csv, json };
MatrixFormat parse_matrix_format(std::string_view s);

void write_matrix(const SimilarityMatrix& m, std::ostream& out, MatrixFormat format);
void write_matrix(const SimilarityMatrix& m, const std::string& path, MatrixFormat format);
/// Detects the format from content: '{' = json, "method,scale,ids" header =
/// condensed-csv, otherwise full-csv.
SimilarityMatrix read_matrix_text(std::string_view text, const std::string& source = {});
SimilarityMatrix read_matrix(const std::string& path);

// ---------------------------------------------------------------------------
// Datasets and file formats

enum class Format { stimuli_csv, judgments_csv, captions_csv, chains_json };
Format parse_format(std::string_view s);

struct Dataset {
  std::vector<Stimulus> stimuli;
  std::optional<JudgmentSet> judgments;
  std::vector<CaptionSet> captions;  // one entry per stimulus with captions, first-seen order
  std::vector<TagChain> chains;

  std::vector<std::string> stimulus_ids() const;
  const Stimulus* find_stimulus(std::string_view id) const;
  const TagChain* find_chain(std::string_view id) const;
  const CaptionSet* find_captions(std::string_view id) const;
};

std::vector<Stimulus> parse_stimuli(std::string_view text, const std::string& source = {});
JudgmentSet parse_judgments(std::string_view text, const std::string& source = {});
std::vector<CaptionSet> parse_captions(std::string_view text, const std::string& source = {});
std::vector<TagChain> parse_chains(std::string_view text, const std::string& source = {});

/// Loads one file of the given format into the matching Dataset field.
Dataset load_dataset(const std::string& path, Format format);

/// Loads a dataset directory: stimuli.csv (required) plus any of
/// judgments.csv, captions.csv, chains.json. Cross-references every id
/// against the stimulus list.
Dataset load_dataset_dir(const std::string& dir);

/// Throws ValidationError for ids that are not in `stimuli`.
void validate_references(const Dataset& dataset);

void write_stimuli(std::ostream& out, std::span<const Stimulus> stimuli);
void write_judgments(std::ostream& out, const JudgmentSet& judgments);
void write_captions(std::ostream& out, std::span<const CaptionSet> captions);
void write_chains(std::ostream& out, std::span<const TagChain> chains);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

}  // namespace stepsim::corpus
