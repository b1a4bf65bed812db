#include "chronokey/evalproto.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "chronokey/rng.hpp"
#include "chronokey/synth.hpp"
#include "doctest.h"

using namespace chronokey;

TEST_CASE("protocol grid: exactly six valid modes") {
  auto grid = protocol_grid();
  REQUIRE(grid.size() == 6);
  std::set<std::string> names;
  for (const auto& m : grid) {
    CHECK(names.insert(m.name()).second);
    CHECK((m.ne || m.dq));  // ne=0 implies dq=1
    CHECK_NOTHROW(m.validate());
    CHECK(ProtocolMode::parse(m.name()).name() == m.name());
  }
  CHECK(official_protocol().name() == "neg1_ne1_dq0");
  ProtocolMode bad{true, false, false};
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK_THROWS_AS(ProtocolMode::parse("neg1_ne0_dq0"), Error);
  CHECK_THROWS_AS(ProtocolMode::parse("nonsense"), Error);
}

namespace {

Gallery proto_gallery() {
  Gallery g;
  g.manifest.gongs = {"A"};
  g.manifest.G = 1;
  g.manifest.Y = 1;
  g.manifest.M = 13;
  auto add = [&](std::string id, int month, RecordType t) {
    Record r;
    r.id = std::move(id);
    r.text = "x";
    r.key = {0, 1, month};
    r.rtype = t;
    g.records.push_back(std::move(r));
  };
  add("e1", 1, RecordType::event);
  add("n2", 2, RecordType::no_event);
  add("c1", 1, RecordType::neg_comment);
  add("e3", 3, RecordType::event);
  g.rebuild_index();
  return g;
}

Query make_query(std::string id, Interval iv, std::vector<std::string> gt, bool pure_ne) {
  Query q;
  q.id = std::move(id);
  q.text = "q";
  q.interval = iv;
  q.gt_ids = std::move(gt);
  q.is_pure_no_event = pure_ne;
  return q;
}

}  // namespace

TEST_CASE("apply_protocol filters pool and truth per mode") {
  Gallery g = proto_gallery();
  std::vector<Query> qs = {
      make_query("q1", {{0, 1, 1}, {0, 1, 1}}, {"e1"}, false),
      make_query("q2", {{0, 1, 2}, {0, 1, 2}}, {"n2"}, true),
      make_query("q3", {{0, 1, 2}, {0, 1, 3}}, {"e3", "n2"}, false),
  };

  ProtocolView full = apply_protocol(g, qs, {true, true, false});
  CHECK(full.candidate_ids == std::vector<std::string>{"e1", "n2", "c1", "e3"});
  CHECK(full.queries.size() == 3);
  CHECK(full.dropped_queries == 0);

  ProtocolView noneg = apply_protocol(g, qs, {false, true, false});
  CHECK(noneg.candidate_ids == std::vector<std::string>{"e1", "n2", "e3"});
  CHECK(noneg.dropped_records == 1);

  ProtocolView dq = apply_protocol(g, qs, {true, true, true});
  CHECK(dq.queries.size() == 2);  // the pure no-event query is dropped
  CHECK(dq.dropped_queries == 1);

  ProtocolView ne0 = apply_protocol(g, qs, {true, false, true});
  CHECK(ne0.candidate_ids == std::vector<std::string>{"e1", "c1", "e3"});
  REQUIRE(ne0.queries.size() == 2);
  // q3 keeps only its event truth
  CHECK(ne0.queries[1].gt_ids == std::vector<std::string>{"e3"});

  // dq=0 query sets are supersets of dq=1 sets
  CHECK(full.queries.size() >= dq.queries.size());
  CHECK_THROWS_AS(apply_protocol(g, qs, ProtocolMode{true, false, false}), Error);
}

namespace {

// Independent reference implementation of the ranking metrics.
Metrics brute_metrics(const std::vector<std::vector<std::string>>& rankings,
                      const std::vector<std::set<std::string>>& gts) {
  Metrics m;
  m.n_queries = rankings.size();
  for (size_t q = 0; q < rankings.size(); ++q) {
    auto hit_at = [&](size_t K) {
      for (size_t r = 0; r < std::min(K, rankings[q].size()); ++r)
        if (gts[q].count(rankings[q][r])) return true;
      return false;
    };
    m.r1 += hit_at(1);
    m.r5 += hit_at(5);
    m.r10 += hit_at(10);
    for (size_t r = 0; r < std::min<size_t>(10, rankings[q].size()); ++r)
      if (gts[q].count(rankings[q][r])) {
        m.mrr10 += 1.0 / static_cast<double>(r + 1);
        break;
      }
    double dcg = 0;
    for (size_t r = 0; r < std::min<size_t>(10, rankings[q].size()); ++r)
      if (gts[q].count(rankings[q][r])) dcg += 1.0 / std::log2(static_cast<double>(r + 2));
    double idcg = 0;
    for (size_t r = 0; r < std::min<size_t>(10, gts[q].size()); ++r)
      idcg += 1.0 / std::log2(static_cast<double>(r + 2));
    if (idcg > 0) m.ndcg10 += dcg / idcg;
  }
  double n = static_cast<double>(rankings.size());
  m.r1 /= n;
  m.r5 /= n;
  m.r10 /= n;
  m.mrr10 /= n;
  m.ndcg10 /= n;
  return m;
}

}  // namespace

TEST_CASE("metrics match the brute-force reference on randomized cases") {
  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    size_t n_docs = 5 + rng.bounded(30);
    size_t n_q = 1 + rng.bounded(4);
    std::vector<QueryResult> results;
    std::vector<Query> queries;
    std::vector<std::vector<std::string>> rankings;
    std::vector<std::set<std::string>> gts;
    for (size_t q = 0; q < n_q; ++q) {
      std::vector<std::string> docs;
      for (size_t d = 0; d < n_docs; ++d) docs.push_back("d" + std::to_string(d));
      rng.shuffle(docs);
      size_t listed = 1 + rng.bounded(n_docs);
      docs.resize(listed);
      std::set<std::string> gt;
      size_t n_gt = 1 + rng.bounded(12);
      for (size_t i = 0; i < n_gt; ++i) gt.insert("d" + std::to_string(rng.bounded(n_docs)));

      QueryResult qr;
      qr.query_id = "q" + std::to_string(q);
      for (const auto& d : docs) qr.ranking.push_back({d, 0.0, 0});
      results.push_back(qr);
      Query qq;
      qq.id = qr.query_id;
      qq.gt_ids.assign(gt.begin(), gt.end());
      queries.push_back(qq);
      rankings.push_back(docs);
      gts.push_back(gt);
    }
    Metrics got = compute_metrics(results, queries);
    Metrics want = brute_metrics(rankings, gts);
    CHECK(std::abs(got.r1 - want.r1) < 1e-12);
    CHECK(std::abs(got.r5 - want.r5) < 1e-12);
    CHECK(std::abs(got.r10 - want.r10) < 1e-12);
    CHECK(std::abs(got.mrr10 - want.mrr10) < 1e-12);
    CHECK(std::abs(got.ndcg10 - want.ndcg10) < 1e-12);
  }
}

TEST_CASE("rank-10 versus rank-11 cutoff is exact") {
  auto one_case = [](size_t rel_rank) {
    QueryResult qr;
    qr.query_id = "q";
    for (size_t r = 0; r < 12; ++r) qr.ranking.push_back({"d" + std::to_string(r), 0.0, 0});
    Query q;
    q.id = "q";
    q.gt_ids = {"d" + std::to_string(rel_rank - 1)};  // 1-based target rank
    return compute_metrics({qr}, {q});
  };
  Metrics at10 = one_case(10);
  CHECK(at10.r10 == 1.0);
  CHECK(at10.mrr10 == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(at10.ndcg10 == doctest::Approx(1.0 / std::log2(11.0)).epsilon(1e-15));
  Metrics at11 = one_case(11);
  CHECK(at11.r10 == 0.0);
  CHECK(at11.mrr10 == 0.0);
  CHECK(at11.ndcg10 == 0.0);
}

TEST_CASE("bm25 scorer end to end with threading determinism") {
  SynthSpec spec;
  spec.gongs = {"甲公"};
  spec.Y = 3;
  spec.seed = 2;
  Gallery g = generate_corpus(spec).gallery;
  synthesize_no_event(g, g.timeline());
  QueryGenConfig qc;
  qc.enabled_templates = {1, 13};
  auto qs = instantiate_queries(g, default_templates(), qc).queries;

  ProtocolView view = apply_protocol(g, qs, official_protocol());
  Bm25Scorer scorer(g, view.candidate_ids);
  auto serial = rank_all(view.queries, scorer, 50, 1);
  auto parallel = rank_all(view.queries, scorer, 50, 4);
  REQUIRE(serial.size() == parallel.size());
  for (size_t i = 0; i < serial.size(); ++i) {
    REQUIRE(serial[i].ranking.size() == parallel[i].ranking.size());
    for (size_t r = 0; r < serial[i].ranking.size(); ++r) {
      CHECK(serial[i].ranking[r].id == parallel[i].ranking[r].id);
      CHECK(serial[i].ranking[r].score == parallel[i].ranking[r].score);
    }
  }

  RunReport rep = evaluate(view.queries, scorer, official_protocol(), 1);
  CHECK(rep.scorer == "bm25");
  CHECK(rep.mode == "neg1_ne1_dq0");
  CHECK(rep.overall.n_queries == view.queries.size());
  CHECK(rep.strata.count("family_point") == 1);
  CHECK(rep.strata.count("span_1") == 1);
  // the point queries name the month key verbatim, lexical search should do well
  CHECK(rep.overall.r10 > 0.5);
}

TEST_CASE("run report json and trec export") {
  RunReport rep;
  rep.scorer = "bm25";
  rep.mode = "neg1_ne1_dq0";
  rep.overall.r1 = 0.5;
  rep.overall.n_queries = 2;
  rep.per_query = {{"q1", {{"a", 1.5, 0}, {"b", 0.5, 0}}}, {"q2", {{"c", 2.0, 0}}}};
  std::string path = (std::filesystem::temp_directory_path() / "ck_report.json").string();
  rep.save(path);
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  CHECK(ss.str().find("\"scorer\": \"bm25\"") != std::string::npos);
  CHECK(ss.str().find("\"R@1\": 0.5") != std::string::npos);
  std::filesystem::remove(path);

  std::string trec = (std::filesystem::temp_directory_path() / "ck_run.trec").string();
  export_trec(rep.per_query, "test_run", trec);
  std::ifstream tf(trec);
  std::string line;
  std::getline(tf, line);
  CHECK(line == "q1 Q0 a 1 1.5 test_run");
  std::getline(tf, line);
  CHECK(line == "q1 Q0 b 2 0.5 test_run");
  std::getline(tf, line);
  CHECK(line == "q2 Q0 c 1 2 test_run");
  std::filesystem::remove(trec);
}

TEST_CASE("ctd scorer agrees with score_matrix on a paired batch") {
  SynthSpec spec;
  spec.gongs = {"甲公"};
  spec.Y = 2;
  spec.seed = 4;
  Gallery g = generate_corpus(spec).gallery;
  std::vector<std::string> ids, texts;
  for (const auto& r : g.records) {
    ids.push_back(r.id);
    texts.push_back(r.text);
  }
  EmbeddingMatrix emb = hash_encode_all(ids, texts, 16, 0);

  CTDConfig cc;
  cc.H = 16;
  cc.G = g.manifest.G;
  cc.Y = g.manifest.Y;
  cc.M = g.manifest.M;
  cc.D_t = 8;
  cc.K = 2;
  cc.H1 = 8;
  CTDParams p = CTDParams::init(cc, 6);
  Rng rng(8);
  p.gamma = 0.3;
  p.epsilon = 0.2;
  for (double& v : p.W_ctx.data) v = (2.0 * rng.uniform() - 1.0) * 0.1;

  Query q;
  q.id = "q";
  q.text = "甲公元年正月有何事？";
  CTDScorer scorer(p, emb, ids, ScoreMode::ctd, 16, 0);
  auto ranked = scorer.rank(q, ids.size());
  CHECK(ranked.size() == ids.size());

  // rebuild the same scores through the batched forward pass
  std::vector<double> qv = hash_encode(q.text, 16, 0);
  double n2 = 0;
  for (double v : qv) n2 += v * v;
  for (double& v : qv) v /= std::sqrt(n2);
  for (const auto& sd : ranked) {
    BatchTensors bt;
    bt.q_emb = Mat(1, 16);
    bt.d_emb = Mat(1, 16);
    for (int k = 0; k < 16; ++k) {
      bt.q_emb(0, k) = qv[k];
      bt.d_emb(0, k) = emb.vec(emb.at(sd.id))[k];
    }
    bt.d_labels = {g.find(sd.id)->key};
    bt.q_intervals = {{bt.d_labels[0], bt.d_labels[0]}};
    bt.P = Mat(1, 1);
    bt.P(0, 0) = 1.0;
    Mat S = score_matrix(bt, p, ScoreMode::ctd);
    CHECK(sd.score == doctest::Approx(S(0, 0)).epsilon(1e-9));
  }
}
