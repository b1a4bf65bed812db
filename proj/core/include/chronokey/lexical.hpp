#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "chronokey/corpus.hpp"

namespace chronokey {

/// Character unigrams + bigrams over the normalized text (whitespace and
/// punctuation stripped). Queries and documents share this tokenization.
std::vector<std::string> tokenize(const std::string& text);

struct Posting {
  uint32_t doc = 0;  // doc ordinal within the index
  uint32_t tf = 0;
};

struct InvertedIndex {
  std::vector<std::string> doc_ids;    // doc ordinal -> record id
  std::vector<int64_t> doc_month;      // doc ordinal -> month ordinal
  std::vector<uint32_t> doc_len;
  std::map<std::string, std::vector<Posting>> postings;  // sorted by doc
  double avgdl = 0.0;
  uint32_t N = 0;

  /// Binary format, magic "CQIDX1". Rebuildable deterministically.
  void save(const std::string& path) const;
  static InvertedIndex load(const std::string& path);
};

InvertedIndex build_index(const Gallery& gallery);

struct ScoredDoc {
  std::string id;
  double score = 0.0;
  int64_t month = 0;  // month ordinal, carried for temporal reranking
};

/// Standard BM25 with IDF = ln((N - df + 0.5)/(df + 0.5) + 1).
/// Ties break by ascending record id.
std::vector<ScoredDoc> bm25_search(const InvertedIndex& index, const std::string& query_text,
                                   double k1 = 1.2, double b = 0.75, size_t topN = 100);

/// Gaussian kernel density over the month ordinals of the top hits (kernel
/// weight proportional to lexical score); every candidate is rescored as
/// s' = s + w * log(density + 1e-9) and re-sorted under the same tie rule.
/// Degenerate fits (all fit points on one ordinal) leave the ranking as is.
std::vector<ScoredDoc> timekde_rerank(const std::vector<ScoredDoc>& ranked, double bandwidth_h,
                                      double weight_w, size_t topK_fit = 20);

}  // namespace chronokey
