#include "chronokey/evalproto.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace chronokey {

std::string ProtocolMode::name() const {
  return "neg" + std::to_string(neg ? 1 : 0) + "_ne" + std::to_string(ne ? 1 : 0) + "_dq" +
         std::to_string(dq ? 1 : 0);
}

ProtocolMode ProtocolMode::parse(const std::string& s) {
  for (ProtocolMode m : protocol_grid())
    if (m.name() == s) return m;
  throw Error("unknown protocol mode '" + s + "'");
}

void ProtocolMode::validate() const {
  if (!ne && !dq)
    throw Error("protocol " + name() +
                ": ne=0 requires dq=1 (otherwise some queries lose all ground truth)");
}

std::vector<ProtocolMode> protocol_grid() {
  std::vector<ProtocolMode> grid;
  for (int neg = 0; neg <= 1; ++neg)
    for (int ne = 0; ne <= 1; ++ne)
      for (int dq = 0; dq <= 1; ++dq) {
        if (!ne && !dq) continue;
        grid.push_back({neg != 0, ne != 0, dq != 0});
      }
  return grid;
}

ProtocolMode official_protocol() { return {true, true, false}; }

ProtocolView apply_protocol(const Gallery& gallery, const std::vector<Query>& queries,
                            ProtocolMode mode) {
  mode.validate();
  ProtocolView view;
  std::unordered_map<std::string, RecordType> rtype;
  for (const Record& r : gallery.records) {
    rtype.emplace(r.id, r.rtype);
    bool keep = true;
    if (r.rtype == RecordType::neg_comment && !mode.neg) keep = false;
    if (r.rtype == RecordType::no_event && !mode.ne) keep = false;
    if (keep)
      view.candidate_ids.push_back(r.id);
    else
      view.dropped_records += 1;
  }

  for (const Query& q : queries) {
    if (mode.dq && q.is_pure_no_event) {
      view.dropped_queries += 1;
      continue;
    }
    Query filtered = q;
    if (!mode.ne) {
      std::vector<std::string> kept;
      for (const std::string& id : filtered.gt_ids) {
        auto it = rtype.find(id);
        if (it != rtype.end() && it->second == RecordType::no_event) continue;
        kept.push_back(id);
      }
      filtered.gt_ids = std::move(kept);
    }
    if (filtered.gt_ids.empty()) {
      view.dropped_queries += 1;
      continue;
    }
    view.queries.push_back(std::move(filtered));
  }
  return view;
}

Bm25Scorer::Bm25Scorer(const Gallery& gallery, const std::vector<std::string>& candidate_ids,
                       double k1, double b, double kde_weight, double kde_bandwidth)
    : k1_(k1), b_(b), kde_weight_(kde_weight), kde_bandwidth_(kde_bandwidth) {
  std::unordered_set<std::string> keep(candidate_ids.begin(), candidate_ids.end());
  Gallery sub;
  sub.manifest = gallery.manifest;
  for (const Record& r : gallery.records)
    if (keep.count(r.id)) sub.records.push_back(r);
  index_ = build_index(sub);
  name_ = kde_weight_ != 0.0 ? "bm25+timekde" : "bm25";
}

std::vector<ScoredDoc> Bm25Scorer::rank(const Query& query, size_t topN) const {
  std::vector<ScoredDoc> hits = bm25_search(index_, query.text, k1_, b_, topN);
  if (kde_weight_ != 0.0) hits = timekde_rerank(hits, kde_bandwidth_, kde_weight_);
  return hits;
}

namespace {

const char* score_mode_name(ScoreMode m) {
  switch (m) {
    case ScoreMode::sem: return "sem";
    case ScoreMode::abs: return "abs";
    default: return "ctd";
  }
}

}  // namespace

CTDScorer::CTDScorer(const CTDParams& params, const EmbeddingMatrix& record_emb,
                     const std::vector<std::string>& candidate_ids, ScoreMode mode, int hash_H,
                     uint64_t hash_seed)
    : params_(params), mode_(mode), hash_H_(hash_H), hash_seed_(hash_seed), ids_(candidate_ids) {
  if (hash_H_ != params.cfg.H) throw Error("ctd scorer: encoder width != model width");
  size_t C = ids_.size();
  htil_d_ = Mat(C, params.cfg.H);
  u_d_.resize(C);
  months_.assign(C, 0);
  for (size_t i = 0; i < C; ++i) {
    const float* row = record_emb.vec(record_emb.at(ids_[i]));
    std::vector<double> h(row, row + params.cfg.H);
    std::vector<double> pg, py, pm;
    head_forward(h, params_, pg, py, pm);
    SoftCoords sc = soft_coords_and_u(pg, py, pm, params_.cfg);
    u_d_[i] = sc.u;
    // adapted embedding, optionally context-enriched
    std::vector<double> a(params.cfg.H, 0.0);
    for (int r = 0; r < params.cfg.H; ++r) {
      const double* Ar = params_.A.row(r);
      double v = 0.0;
      for (int c2 = 0; c2 < params.cfg.H; ++c2) v += Ar[c2] * h[c2];
      a[r] = v;
    }
    std::vector<double> htil =
        mode_ == ScoreMode::sem ? a : context_inject(a, pg, py, pm, params_);
    std::copy(htil.begin(), htil.end(), htil_d_.row(i));
  }
}

std::string CTDScorer::name() const { return score_mode_name(mode_); }

std::vector<ScoredDoc> CTDScorer::rank(const Query& query, size_t topN) const {
  std::vector<double> h = hash_encode(query.text, hash_H_, hash_seed_);
  double n2 = 0.0;
  for (double v : h) n2 += v * v;
  if (n2 > 0.0) {
    double inv = 1.0 / std::sqrt(n2);
    for (double& v : h) v *= inv;
  }
  std::vector<double> pg, py, pm;
  head_forward(h, params_, pg, py, pm);
  SoftCoords sc = soft_coords_and_u(pg, py, pm, params_.cfg);

  std::vector<double> a(params_.cfg.H, 0.0);
  for (int r = 0; r < params_.cfg.H; ++r) {
    const double* Ar = params_.A.row(r);
    double v = 0.0;
    for (int c2 = 0; c2 < params_.cfg.H; ++c2) v += Ar[c2] * h[c2];
    a[r] = v;
  }
  std::vector<double> htil_q =
      mode_ == ScoreMode::sem ? a : context_inject(a, pg, py, pm, params_);

  size_t C = ids_.size();
  std::vector<ScoredDoc> out;
  out.reserve(C);
  for (size_t j = 0; j < C; ++j) {
    const double* hd = htil_d_.row(j);
    double s = 0.0;
    for (int k = 0; k < params_.cfg.H; ++k) s += htil_q[k] * hd[k];
    s /= params_.cfg.alpha;
    if (mode_ == ScoreMode::ctd && params_.epsilon != 0.0) {
      std::vector<double> phi = fourier_offset(u_d_[j] - sc.u, params_.cfg.K);
      double out1 = params_.b2;
      for (int k = 0; k < params_.cfg.H1; ++k) {
        double z = params_.b1[k];
        const double* w1k = params_.W1.row(k);
        for (int f = 0; f < params_.cfg.d_phi(); ++f) z += w1k[f] * phi[f];
        out1 += params_.w2[k] * std::tanh(z);
      }
      s += params_.epsilon * out1;
    }
    out.push_back({ids_[j], s, months_[j]});
  }
  std::sort(out.begin(), out.end(), [](const ScoredDoc& x, const ScoredDoc& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.id < y.id;
  });
  if (out.size() > topN) out.resize(topN);
  return out;
}

std::vector<QueryResult> rank_all(const std::vector<Query>& queries, const Scorer& scorer,
                                  size_t topN, int threads) {
  std::vector<QueryResult> results(queries.size());
  auto work = [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i)
      results[i] = {queries[i].id, scorer.rank(queries[i], topN)};
  };
  if (threads <= 1 || queries.size() < 2) {
    work(0, queries.size());
  } else {
    size_t nt = std::min<size_t>(threads, queries.size());
    std::vector<std::thread> pool;
    size_t chunk = (queries.size() + nt - 1) / nt;
    for (size_t t = 0; t < nt; ++t) {
      size_t b = t * chunk, e = std::min(queries.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return results;
}

Metrics compute_metrics(const std::vector<QueryResult>& results,
                        const std::vector<Query>& queries) {
  if (results.size() != queries.size()) throw Error("metrics: result/query count mismatch");
  Metrics m;
  m.n_queries = queries.size();
  if (queries.empty()) return m;
  for (size_t i = 0; i < queries.size(); ++i) {
    if (results[i].query_id != queries[i].id) throw Error("metrics: query order mismatch");
    std::unordered_set<std::string> gt(queries[i].gt_ids.begin(), queries[i].gt_ids.end());
    const auto& rk = results[i].ranking;
    size_t first_rel = 0;  // 1-based, 0 = none in top 10
    double dcg = 0.0;
    for (size_t r = 0; r < rk.size() && r < 10; ++r) {
      if (gt.count(rk[r].id)) {
        if (first_rel == 0) first_rel = r + 1;
        dcg += 1.0 / std::log2(double(r) + 2.0);
      }
    }
    if (first_rel >= 1) m.r10 += 1.0;
    if (first_rel >= 1 && first_rel <= 5) m.r5 += 1.0;
    if (first_rel == 1) m.r1 += 1.0;
    if (first_rel != 0) m.mrr10 += 1.0 / double(first_rel);
    double idcg = 0.0;
    size_t ideal = std::min<size_t>(gt.size(), 10);
    for (size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(double(r) + 2.0);
    if (idcg > 0.0) m.ndcg10 += dcg / idcg;
  }
  double n = double(queries.size());
  m.r1 /= n;
  m.r5 /= n;
  m.r10 /= n;
  m.mrr10 /= n;
  m.ndcg10 /= n;
  return m;
}

namespace {

nlohmann::ordered_json metrics_json(const Metrics& m) {
  return {{"R@1", m.r1},     {"R@5", m.r5},       {"R@10", m.r10},
          {"MRR@10", m.mrr10}, {"nDCG@10", m.ndcg10}, {"n_queries", m.n_queries}};
}

}  // namespace

std::string RunReport::to_json() const {
  nlohmann::ordered_json j;
  j["scorer"] = scorer;
  j["mode"] = mode;
  j["overall"] = metrics_json(overall);
  nlohmann::ordered_json js = nlohmann::ordered_json::object();
  for (const auto& [name, m] : strata) js[name] = metrics_json(m);
  j["strata"] = js;
  nlohmann::ordered_json jq = nlohmann::ordered_json::array();
  for (const QueryResult& qr : per_query) {
    nlohmann::ordered_json ids = nlohmann::ordered_json::array();
    for (const ScoredDoc& d : qr.ranking) ids.push_back(d.id);
    jq.push_back({{"query_id", qr.query_id}, {"top", ids}});
  }
  j["per_query"] = jq;
  return j.dump(2);
}

void RunReport::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw Error("report: cannot write " + path);
  f << to_json() << "\n";
}

RunReport evaluate(const std::vector<Query>& queries, const Scorer& scorer, ProtocolMode mode,
                   int threads) {
  RunReport rep;
  rep.scorer = scorer.name();
  rep.mode = mode.name();
  rep.per_query = rank_all(queries, scorer, 100, threads);
  rep.overall = compute_metrics(rep.per_query, queries);

  auto subset = [&](auto pred, const char* label) {
    std::vector<Query> qs;
    std::vector<QueryResult> rs;
    for (size_t i = 0; i < queries.size(); ++i)
      if (pred(queries[i])) {
        qs.push_back(queries[i]);
        rs.push_back(rep.per_query[i]);
      }
    rep.strata[label] = compute_metrics(rs, qs);
  };
  subset([](const Query& q) { return q.family != QueryFamily::W; }, "family_point");
  subset([](const Query& q) { return q.family == QueryFamily::W; }, "family_window");
  subset([](const Query& q) { return q.span_months == 1; }, "span_1");
  subset([](const Query& q) { return q.span_months > 1; }, "span_multi");
  return rep;
}

void export_trec(const std::vector<QueryResult>& results, const std::string& run_name,
                 const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("trec export: cannot write " + path);
  for (const QueryResult& qr : results) {
    int rank = 1;
    for (const ScoredDoc& d : qr.ranking)
      f << qr.query_id << " Q0 " << d.id << " " << rank++ << " " << d.score << " " << run_name
        << "\n";
  }
}

}  // namespace chronokey
