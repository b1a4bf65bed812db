#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "chronokey/ctd.hpp"
#include "chronokey/embed.hpp"
#include "chronokey/lexical.hpp"
#include "chronokey/querygen.hpp"

namespace chronokey {

/// Candidate-pool / query-set switches. ne = 0 forces dq = 1 (queries whose
/// ground truth is purely synthesized no-event records would otherwise be
/// left with empty truth sets), so six of the eight combinations are valid.
struct ProtocolMode {
  bool neg = true;  // keep distractor commentary records in the pool
  bool ne = true;   // keep synthesized no-event records in pool and truth
  bool dq = false;  // drop queries whose entire truth is no-event records

  std::string name() const;
  static ProtocolMode parse(const std::string& name);
  void validate() const;  // throws on ne = 0 && dq = 0
};

/// The six valid modes in canonical order; official() is neg1_ne1_dq0.
std::vector<ProtocolMode> protocol_grid();
ProtocolMode official_protocol();

struct ProtocolView {
  std::vector<std::string> candidate_ids;          // pool, in gallery order
  std::vector<Query> queries;                      // truth filtered per mode
  int64_t dropped_queries = 0;
  int64_t dropped_records = 0;
};

ProtocolView apply_protocol(const Gallery& gallery, const std::vector<Query>& queries,
                            ProtocolMode mode);

/// Ranks the candidate pool for one query; results sorted by score
/// descending, ties broken by ascending id.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::string name() const = 0;
  virtual std::vector<ScoredDoc> rank(const Query& query, size_t topN) const = 0;
};

class Bm25Scorer : public Scorer {
 public:
  /// kde_weight = 0 disables the density rerank (plain BM25).
  Bm25Scorer(const Gallery& gallery, const std::vector<std::string>& candidate_ids,
             double k1 = 1.2, double b = 0.75, double kde_weight = 0.0,
             double kde_bandwidth = 1.0);
  std::string name() const override { return name_; }
  std::vector<ScoredDoc> rank(const Query& query, size_t topN) const override;

 private:
  InvertedIndex index_;
  double k1_, b_, kde_weight_, kde_bandwidth_;
  std::string name_;
};

class CTDScorer : public Scorer {
 public:
  CTDScorer(const CTDParams& params, const EmbeddingMatrix& record_emb,
            const std::vector<std::string>& candidate_ids, ScoreMode mode, int hash_H,
            uint64_t hash_seed);
  std::string name() const override;
  std::vector<ScoredDoc> rank(const Query& query, size_t topN) const override;

 private:
  const CTDParams& params_;
  ScoreMode mode_;
  int hash_H_;
  uint64_t hash_seed_;
  std::vector<std::string> ids_;
  std::vector<int64_t> months_;
  Mat htil_d_;               // C x H
  std::vector<double> u_d_;  // C
};

struct Metrics {
  double r1 = 0.0, r5 = 0.0, r10 = 0.0;
  double mrr10 = 0.0, ndcg10 = 0.0;
  size_t n_queries = 0;
};

struct QueryResult {
  std::string query_id;
  std::vector<ScoredDoc> ranking;  // top-100
};

/// Exhaustive ranking of every query against the pool. threads <= 1 runs
/// serially; results are deterministic regardless of thread count.
std::vector<QueryResult> rank_all(const std::vector<Query>& queries, const Scorer& scorer,
                                  size_t topN = 100, int threads = 1);

/// R@K as hit-rate; MRR@10; nDCG@10 with binary gains and the ideal DCG over
/// min(|truth|, 10) positions.
Metrics compute_metrics(const std::vector<QueryResult>& results,
                        const std::vector<Query>& queries);

struct RunReport {
  std::string scorer;
  std::string mode;
  Metrics overall;
  std::map<std::string, Metrics> strata;  // family_point/family_window/span_1/span_multi
  std::vector<QueryResult> per_query;

  std::string to_json() const;
  void save(const std::string& path) const;
};

RunReport evaluate(const std::vector<Query>& queries, const Scorer& scorer, ProtocolMode mode,
                   int threads = 1);

/// "qid Q0 docid rank score runname" lines.
void export_trec(const std::vector<QueryResult>& results, const std::string& run_name,
                 const std::string& path);

}  // namespace chronokey
