#include "stepsim/methods.hpp"

#include <algorithm>

#include "stepsim/error.hpp"
#include "stepsim/fusion.hpp"
#include "stepsim/pairwise.hpp"

namespace stepsim::methods {

using corpus::SimilarityMatrix;
using embeddings::EmbeddingTable;
using embeddings::Vector;

const std::vector<std::string>& names() {
  static const std::vector<std::string> n = {
      "tags-overlap", "tags-quantized", "tags-mean",  "tags-mean-nosplit", "tags-to-caption",
      "captions-mean", "wfa-cooc",      "wfa-cooc-rep", "wfa-rouge",       "wfa-bm25s",
      "wfa-tfidf",    "dnn-cosine",     "stacked"};
  return n;
}

bool is_known(std::string_view name) {
  const auto& n = names();
  return std::find(n.begin(), n.end(), name) != n.end();
}

bool needs_word_table(std::string_view name) {
  return name == "tags-overlap" || name == "tags-quantized" || name == "tags-mean" ||
         name == "tags-mean-nosplit";
}

TextSource parse_text_source(std::string_view s) {
  if (s == "tags") return TextSource::tags;
  if (s == "captions") return TextSource::captions;
  throw ValidationError("unknown text source \"" + std::string(s) + "\" (expected tags or captions)");
}

namespace {

std::string list_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t k = 0; k < ids.size() && k < 10; ++k) out += (k ? ", " : "") + ids[k];
  if (ids.size() > 10) out += ", ... (" + std::to_string(ids.size()) + " total)";
  return out;
}

const EmbeddingTable& require_table(const Inputs& in, std::string_view name, const char* what) {
  if (!in.table) throw ValidationError(std::string(name) + " needs " + what + " (--embeddings)");
  return *in.table;
}

SimilarityMatrix word_matrix(std::string_view name, const Inputs& in,
                             double (*score)(const wfa::WordDocument&, const wfa::WordDocument&)) {
  const auto& d = *in.dataset;
  std::vector<wfa::WordDocument> docs;
  const bool whole = name == "wfa-cooc-rep";
  if (in.source == TextSource::tags) {
    for (const auto& id : d.stimulus_ids()) {
      const auto* c = d.find_chain(id);
      if (!c) throw ValidationError("stimulus " + id + " has no tag chain");
      docs.push_back(wfa::build_tag_document(*c, whole ? wfa::TagTokens::whole : wfa::TagTokens::split));
    }
  } else {
    for (const auto& id : d.stimulus_ids()) {
      const auto* c = d.find_captions(id);
      if (!c) throw ValidationError("stimulus " + id + " has no captions");
      docs.push_back(wfa::build_caption_document(*c));
    }
  }
  // Whole-tag tokens are compared verbatim; splitting them would undo the
  // point of the method.
  if (!whole) docs = wfa::preprocess_corpus(docs, in.preprocess);
  std::vector<std::string> ids;
  for (const auto& doc : docs) ids.push_back(doc.stimulus_id);

  if (name == "wfa-bm25s" || name == "wfa-tfidf") {
    const auto bag = wfa::make_bag(docs);
    auto m = name == "wfa-bm25s" ? wfa::bm25plus_matrix(bag, in.bm25, in.threads) : wfa::tfidf_cosine(bag, in.threads);
    return m;
  }
  for (const auto& doc : docs)
    if (doc.words.empty()) throw DomainError("word document for stimulus " + doc.stimulus_id + " is empty");
  auto values = pairwise_condensed(
      docs.size(), [&](std::size_t i, std::size_t j) { return score(docs[i], docs[j]); }, in.threads);
  return SimilarityMatrix(std::move(ids), std::move(values), std::string(name), corpus::Scale::raw);
}

}  // namespace

std::vector<textsim::TagSet> tag_sets(const corpus::Dataset& d, textsim::SelectMode mode, std::uint64_t seed) {
  std::vector<textsim::TagSet> out;
  std::vector<std::string> missing;
  for (const auto& s : d.stimuli) {
    const auto* c = d.find_chain(s.id);
    if (!c) {
      missing.push_back(s.id);
      continue;
    }
    out.push_back(textsim::select_tags(*c, mode, seed, &s));
  }
  if (!missing.empty()) throw ValidationError("stimuli without a tag chain: " + list_ids(missing));
  return out;
}

std::vector<corpus::CaptionSet> tag_captions(const corpus::Dataset& d, textsim::SelectMode mode, std::uint64_t seed) {
  std::vector<corpus::CaptionSet> out;
  for (const auto& t : tag_sets(d, mode, seed)) {
    corpus::CaptionSet set;
    set.stimulus_id = t.stimulus_id;
    set.captions.push_back({textsim::tags_to_caption(t), "tags", true});
    out.push_back(std::move(set));
  }
  return out;
}

std::vector<Vector> stimulus_vectors(const EmbeddingTable& table, const std::vector<std::string>& ids) {
  std::vector<Vector> out;
  std::vector<std::string> missing;
  for (const auto& id : ids) {
    if (!table.contains(id)) {
      missing.push_back(id);
      continue;
    }
    out.push_back(table.vector(id));
  }
  if (!missing.empty()) throw ValidationError("embedding table lacks stimuli: " + list_ids(missing));
  return out;
}

SimilarityMatrix compute(const std::string& name, const Inputs& in) {
  if (!is_known(name)) throw ValidationError("unknown method \"" + name + "\"");
  if (!in.dataset) throw ValidationError("no dataset given");
  const auto& d = *in.dataset;
  const auto ids = d.stimulus_ids();

  if (needs_word_table(name)) {
    const auto& table = require_table(in, name, "a word embedding table");
    const bool split = name != "tags-mean-nosplit";
    const auto corrector = embeddings::SpellCorrector::for_table(table, in.frequencies);
    std::vector<textsim::ResolvedTagSet> sets;
    for (const auto& t : tag_sets(d, in.selector, in.seed)) sets.push_back(textsim::resolve(t, table, split, corrector));
    const auto method = name == "tags-overlap"     ? textsim::TagMethod::overlap
                        : name == "tags-quantized" ? textsim::TagMethod::quantized
                                                   : textsim::TagMethod::mean;
    return textsim::tag_matrix(sets, method, name, in.threads);
  }
  if (name == "tags-to-caption" || name == "dnn-cosine") {
    const auto& table = require_table(in, name, "a stimulus-keyed embedding table");
    const auto vecs = stimulus_vectors(table, ids);
    auto values = pairwise_condensed(
        ids.size(), [&](std::size_t i, std::size_t j) { return embeddings::cosine(vecs[i], vecs[j]); }, in.threads);
    return SimilarityMatrix(ids, std::move(values), name, corpus::Scale::unit);
  }
  if (name == "captions-mean") {
    const auto& table = require_table(in, name, "a caption embedding table");
    std::vector<textsim::CaptionEmbeddingSet> sets;
    std::vector<std::string> missing;
    for (const auto& id : ids) {
      textsim::CaptionEmbeddingSet set{id, {}};
      for (std::size_t k = 0;; ++k) {
        auto v = table.find(id + "/" + std::to_string(k));
        if (!v) break;
        set.vectors.emplace_back(v->begin(), v->end());
      }
      if (set.vectors.empty() && table.contains(id)) set.vectors.push_back(table.vector(id));
      if (set.vectors.empty()) missing.push_back(id);
      sets.push_back(std::move(set));
    }
    if (!missing.empty()) throw ValidationError("caption table lacks stimuli: " + list_ids(missing));
    return textsim::caption_matrix(sets, name, in.threads);
  }
  if (name == "stacked") {
    if (in.dnn.empty()) throw ValidationError("stacked needs at least one DNN table (--dnn)");
    std::vector<fusion::StimulusParts> parts(ids.size());
    for (const auto* t : in.dnn) {
      auto vecs = stimulus_vectors(*t, ids);
      for (std::size_t k = 0; k < ids.size(); ++k) parts[k].dnn.push_back(std::move(vecs[k]));
    }
    if (in.llm) {
      auto vecs = stimulus_vectors(*in.llm, ids);
      for (std::size_t k = 0; k < ids.size(); ++k) parts[k].llm = std::move(vecs[k]);
    }
    return fusion::stacked_matrix(ids, parts, in.alpha, in.threads);
  }
  if (name == "wfa-cooc") return word_matrix(name, in, &wfa::cooccurrence);
  if (name == "wfa-cooc-rep") return word_matrix(name, in, &wfa::cooccurrence_rep);
  if (name == "wfa-rouge") return word_matrix(name, in, &wfa::rouge1_symmetric);
  return word_matrix(name, in, nullptr);
}

}  // namespace stepsim::methods
