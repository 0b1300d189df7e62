#include "stepsim/textsim.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

#include "stepsim/error.hpp"
#include "stepsim/hash.hpp"
#include "stepsim/pairwise.hpp"

namespace stepsim::textsim {

using embeddings::cosine;

ResolvedTagSet resolve(const TagSet& tags, const embeddings::EmbeddingTable& table, bool split,
                       const embeddings::SpellCorrector& corrector) {
  ResolvedTagSet out;
  out.stimulus_id = tags.stimulus_id;
  out.resolved.reserve(tags.tags.size());
  for (const auto& t : tags.tags) {
    auto r = embeddings::resolve_tag(t, table, split, corrector);
    if (r.vector) out.vectors.push_back(*r.vector);
    out.resolved.push_back(std::move(r));
  }
  return out;
}

namespace {

void require_nonempty(std::span<const Vector> a, std::span<const Vector> b) {
  if (a.empty() || b.empty()) throw DomainError("tag set has no resolved vectors");
}

bool almost_identical(const Vector& u, const Vector& v, double theta) {
  if (u.size() != v.size()) throw DomainError("tag vectors with different dimensions");
  for (std::size_t k = 0; k < u.size(); ++k)
    if (!(std::abs(u[k] - v[k]) < theta)) return false;
  return true;
}

}  // namespace

double overlap_similarity(std::span<const Vector> a, std::span<const Vector> b, double theta,
                          OverlapNormalization norm) {
  require_nonempty(a, b);
  if (!(theta > 0.0)) throw DomainError("overlap threshold must be positive");
  std::size_t count = 0;
  for (const auto& u : a)
    for (const auto& v : b)
      if (almost_identical(u, v, theta)) ++count;
  const double denom = norm == OverlapNormalization::total_tags
                           ? static_cast<double>(a.size() + b.size())
                           : static_cast<double>(a.size() * b.size());
  return static_cast<double>(count) / denom;
}

double quantized_similarity(std::span<const Vector> a, std::span<const Vector> b, double theta) {
  require_nonempty(a, b);
  if (!(theta > 0.0 && theta <= 1.0)) throw DomainError("quantized threshold must lie in (0,1]");
  const std::size_t ta = a.size(), tb = b.size();
  std::vector<bool> a_hit(ta, false), b_hit(tb, false);
  for (std::size_t i = 0; i < ta; ++i) {
    for (std::size_t j = 0; j < tb; ++j) {
      if (cosine(a[i], b[j]) > theta) {
        a_hit[i] = true;
        b_hit[j] = true;
      }
    }
  }
  const auto na = static_cast<std::size_t>(std::count(a_hit.begin(), a_hit.end(), true));
  const auto nb = static_cast<std::size_t>(std::count(b_hit.begin(), b_hit.end(), true));
  const std::size_t denom = ta + tb - std::max(na, nb);
  return static_cast<double>(std::min(na, nb)) / static_cast<double>(denom);
}

double mean_similarity(std::span<const Vector> a, std::span<const Vector> b) {
  require_nonempty(a, b);
  return cosine(embeddings::mean_of(a), embeddings::mean_of(b));
}

double caption_similarity(const CaptionEmbeddingSet& a, const CaptionEmbeddingSet& b) {
  if (a.vectors.empty() || b.vectors.empty())
    throw DomainError("caption embedding set is empty");
  if (a.vectors.front().size() != b.vectors.front().size())
    throw DomainError("caption embeddings have different dimensions");
  return cosine(embeddings::mean_of(a.vectors), embeddings::mean_of(b.vectors));
}

std::string tags_to_caption(const TagSet& tags, std::string_view prefix) {
  if (tags.tags.empty()) throw DomainError("cannot caption an empty tag set");
  std::string out(prefix);
  for (std::size_t k = 0; k < tags.tags.size(); ++k) {
    if (k) out += ", ";
    out += tags.tags[k];
  }
  return out;
}

SelectMode parse_select_mode(std::string_view s) {
  if (s == "last-iteration") return SelectMode::last_iteration;
  if (s == "first-iteration") return SelectMode::first_iteration;
  if (s == "single-top") return SelectMode::single_top;
  if (s == "label") return SelectMode::label;
  throw ValidationError("unknown tag selector \"" + std::string(s) + "\"");
}

TagSet select_tags(const corpus::TagChain& chain, SelectMode mode, std::uint64_t seed,
                   const corpus::Stimulus* stimulus) {
  TagSet out{chain.stimulus_id, {}};
  switch (mode) {
    case SelectMode::last_iteration:
      out.tags = chain.active_texts();
      break;
    case SelectMode::first_iteration:
      for (const auto& t : chain.tags)
        if (t.created_iteration == 0) out.tags.push_back(t.text);
      break;
    case SelectMode::single_top: {
      double best = -1.0;
      std::vector<const corpus::TagState*> top;
      for (const auto& t : chain.tags) {
        if (t.removed) continue;
        auto m = t.mean_stars();
        if (!m) continue;
        if (*m > best) {
          best = *m;
          top.clear();
        }
        if (*m == best) top.push_back(&t);
      }
      if (!top.empty()) {
        std::mt19937_64 rng(mix_seed(seed, fnv1a(chain.stimulus_id)));
        std::uniform_int_distribution<std::size_t> pick(0, top.size() - 1);
        out.tags.push_back(top[pick(rng)]->text);
      }
      break;
    }
    case SelectMode::label:
      if (!stimulus || !stimulus->label || stimulus->label->empty())
        throw DomainError("stimulus " + chain.stimulus_id + " has no label");
      out.tags.push_back(*stimulus->label);
      for (char& c : out.tags.back()) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      break;
  }
  if (out.tags.empty()) throw DomainError("empty tag selection for stimulus " + chain.stimulus_id);
  return out;
}

namespace {

std::vector<std::string> ids_of(auto sets) {
  std::vector<std::string> ids;
  ids.reserve(sets.size());
  for (const auto& s : sets) ids.push_back(s.stimulus_id);
  return ids;
}

}  // namespace

corpus::SimilarityMatrix tag_matrix(std::span<const ResolvedTagSet> sets, TagMethod method,
                                    std::string method_name, unsigned threads) {
  for (const auto& s : sets)
    if (s.vectors.empty()) throw DomainError("no tag of stimulus " + s.stimulus_id + " has an embedding");
  std::vector<double> values;
  switch (method) {
    case TagMethod::mean: {
      std::vector<Vector> means;
      means.reserve(sets.size());
      for (const auto& s : sets) means.push_back(embeddings::unit(embeddings::mean_of(s.vectors)));
      values = pairwise_condensed(
          sets.size(), [&](std::size_t i, std::size_t j) { return std::clamp(embeddings::dot<double, double>(means[i], means[j]), -1.0, 1.0); },
          threads);
      break;
    }
    case TagMethod::quantized:
      values = pairwise_condensed(
          sets.size(),
          [&](std::size_t i, std::size_t j) { return quantized_similarity(sets[i].vectors, sets[j].vectors); },
          threads);
      break;
    case TagMethod::overlap:
      values = pairwise_condensed(
          sets.size(),
          [&](std::size_t i, std::size_t j) { return overlap_similarity(sets[i].vectors, sets[j].vectors); },
          threads);
      break;
  }
  return corpus::SimilarityMatrix(ids_of(sets), std::move(values), std::move(method_name),
                                  method == TagMethod::mean ? corpus::Scale::unit : corpus::Scale::raw);
}

corpus::SimilarityMatrix caption_matrix(std::span<const CaptionEmbeddingSet> sets, std::string method_name,
                                        unsigned threads) {
  std::vector<Vector> means;
  means.reserve(sets.size());
  for (const auto& s : sets) {
    if (s.vectors.empty()) throw DomainError("stimulus " + s.stimulus_id + " has no caption embedding");
    means.push_back(embeddings::unit(embeddings::mean_of(s.vectors)));
    if (means.back().size() != means.front().size())
      throw DomainError("caption embeddings have different dimensions");
  }
  auto values = pairwise_condensed(
      sets.size(),
      [&](std::size_t i, std::size_t j) { return std::clamp(embeddings::dot<double, double>(means[i], means[j]), -1.0, 1.0); },
      threads);
  return corpus::SimilarityMatrix(ids_of(sets), std::move(values), std::move(method_name), corpus::Scale::unit);
}

}  // namespace stepsim::textsim
