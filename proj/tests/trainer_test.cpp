#include "chronokey/trainer.hpp"

#include <cmath>

#include "chronokey/rng.hpp"
#include "chronokey/synth.hpp"
#include "doctest.h"

using namespace chronokey;

namespace {

CTDConfig tiny_cfg() {
  CTDConfig c;
  c.H = 16;
  c.G = 2;
  c.Y = 2;
  c.M = 12;
  c.D_t = 8;
  c.K = 2;
  c.H1 = 8;
  return c;
}

}  // namespace

TEST_CASE("learning-rate schedule: linear warmup then linear decay") {
  // 100 steps, 10% warmup -> peak at step 10, zero at step 100
  CHECK(lr_multiplier(1, 100, 0.1) == doctest::Approx(0.1));
  CHECK(lr_multiplier(5, 100, 0.1) == doctest::Approx(0.5));
  CHECK(lr_multiplier(10, 100, 0.1) == doctest::Approx(1.0));
  CHECK(lr_multiplier(55, 100, 0.1) == doctest::Approx(0.5));
  CHECK(lr_multiplier(100, 100, 0.1) == doctest::Approx(0.0));
  // warmup never shorter than one step
  CHECK(lr_multiplier(1, 5, 0.0) == doctest::Approx(1.0));
}

TEST_CASE("optimizer step equals a hand-unrolled AdamW update") {
  CTDConfig cfg = tiny_cfg();
  CTDParams p = CTDParams::init(cfg, 1);
  CTDParams before = p;
  CTDGrads g = CTDGrads::zeros(cfg);
  Rng rng(4);
  g.for_each_tensor([&](const char*, double* d, size_t n, bool) {
    for (size_t i = 0; i < n; ++i) d[i] = 2.0 * rng.uniform() - 1.0;
  });

  TrainConfig tc;
  AdamState st = AdamState::zeros(p);
  double lr = 1e-3;
  optimizer_step(p, g, st, tc, lr);
  CHECK(st.t == 1);

  // First step closed form: m_hat = g, v_hat = g^2.
  std::vector<std::pair<const double*, size_t>> b_t, p_t, g_t;
  std::vector<bool> is_mat;
  before.for_each_tensor([&](const char*, double* d, size_t n, bool) { b_t.push_back({d, n}); });
  p.for_each_tensor([&](const char*, double* d, size_t n, bool m) {
    p_t.push_back({d, n});
    is_mat.push_back(m);
  });
  g.for_each_tensor([&](const char*, double* d, size_t n, bool) { g_t.push_back({d, n}); });
  for (size_t k = 0; k < p_t.size(); ++k) {
    for (size_t i = 0; i < p_t[k].second; ++i) {
      double grad = g_t[k].first[i];
      double expect = grad / (std::abs(grad) + tc.adam_eps);
      if (is_mat[k]) expect += tc.weight_decay * b_t[k].first[i];
      expect = b_t[k].first[i] - lr * expect;
      CHECK(p_t[k].first[i] == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  // Second step against an explicit two-step recurrence on one slot.
  CTDGrads g2 = CTDGrads::zeros(cfg);
  g2.A(0, 0) = 0.5;
  double m1 = (1.0 - tc.beta1) * g.A(0, 0);
  double m = tc.beta1 * m1 + (1.0 - tc.beta1) * 0.5;
  double v1 = (1.0 - tc.beta2) * g.A(0, 0) * g.A(0, 0);
  double v = tc.beta2 * v1 + (1.0 - tc.beta2) * 0.25;
  double mh = m / (1.0 - std::pow(tc.beta1, 2));
  double vh = v / (1.0 - std::pow(tc.beta2, 2));
  double prev = p.A(0, 0);
  double expect = prev - lr * (mh / (std::sqrt(vh) + tc.adam_eps) + tc.weight_decay * prev);
  optimizer_step(p, g2, st, tc, lr);
  CHECK(st.t == 2);
  CHECK(p.A(0, 0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("weight decay applies to matrices only") {
  CTDConfig cfg = tiny_cfg();
  CTDParams p = CTDParams::init(cfg, 2);
  p.gamma = 0.8;
  p.bg[0] = 0.6;
  double a00 = p.A(0, 0);
  CTDGrads g = CTDGrads::zeros(cfg);  // zero gradient isolates the decay term
  TrainConfig tc;
  AdamState st = AdamState::zeros(p);
  optimizer_step(p, g, st, tc, 0.1);
  CHECK(p.gamma == 0.8);                                        // scalar: no decay
  CHECK(p.bg[0] == 0.6);                                        // bias: no decay
  CHECK(p.A(0, 0) == doctest::Approx(a00 * (1.0 - 0.1 * tc.weight_decay)));
}

namespace {

struct Fixture {
  Gallery gallery;
  std::vector<Query> queries;
  EmbeddingMatrix record_emb, query_emb;

  Fixture() {
    SynthSpec spec;
    spec.gongs = {"甲公", "乙公"};
    spec.Y = 2;
    spec.event_rate = 0.8;
    spec.distractor_rate = 0.3;
    spec.seed = 9;
    SynthResult sr = generate_corpus(spec);
    gallery = std::move(sr.gallery);
    synthesize_no_event(gallery, gallery.timeline());
    assign_splits(gallery, 0.6, 0.2, 0.2, 5);

    QueryGenConfig qc;
    qc.enabled_templates = {1, 13, 32};
    queries = instantiate_queries(gallery, default_templates(), qc).queries;

    std::vector<std::string> rids, rtexts, qids, qtexts;
    for (const auto& r : gallery.records) {
      rids.push_back(r.id);
      rtexts.push_back(r.text);
    }
    for (const auto& q : queries) {
      qids.push_back(q.id);
      qtexts.push_back(q.text);
    }
    record_emb = hash_encode_all(rids, rtexts, 16, 3);
    query_emb = hash_encode_all(qids, qtexts, 16, 3);
  }
};

}  // namespace

TEST_CASE("make_batches: deterministic, masked by interval overlap") {
  Fixture fx;
  TrainConfig tc;
  tc.batch_size = 8;
  tc.hash_H = 16;
  tc.seed = 42;

  auto b1 = make_batches(fx.queries, fx.gallery, fx.record_emb, fx.query_emb, tc, 0);
  auto b2 = make_batches(fx.queries, fx.gallery, fx.record_emb, fx.query_emb, tc, 0);
  REQUIRE(!b1.empty());
  REQUIRE(b1.size() == b2.size());
  for (size_t k = 0; k < b1.size(); ++k) {
    CHECK(b1[k].q_emb.data == b2[k].q_emb.data);
    CHECK(b1[k].d_emb.data == b2[k].d_emb.data);
    CHECK(b1[k].P.data == b2[k].P.data);
  }
  // different epoch shuffles differently
  auto b3 = make_batches(fx.queries, fx.gallery, fx.record_emb, fx.query_emb, tc, 1);
  bool differs = b1.size() != b3.size();
  for (size_t k = 0; !differs && k < b1.size(); ++k)
    differs = b1[k].q_emb.data != b3[k].q_emb.data;
  CHECK(differs);

  for (const auto& bt : b1) {
    size_t B = bt.B();
    CHECK(B >= 2);
    for (size_t i = 0; i < B; ++i) {
      bool has_pos = false;
      for (size_t j = 0; j < B; ++j) {
        bool overlap = interval_overlap(bt.q_intervals[i], {bt.d_labels[j], bt.d_labels[j]},
                                        fx.gallery.manifest);
        CHECK(bt.P(i, j) == (overlap ? 1.0 : 0.0));
        has_pos |= overlap;
      }
      CHECK(has_pos);  // the sampled gold always overlaps its own query
    }
  }
}

TEST_CASE("training runs, tracks the validation curve and saves usable checkpoints") {
  Fixture fx;
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 8;
  tc.hash_H = 16;
  tc.seed = 7;
  tc.lr = 1e-3;

  CTDConfig cc = tiny_cfg();
  cc.G = fx.gallery.manifest.G;
  cc.Y = fx.gallery.manifest.Y;
  cc.M = fx.gallery.manifest.M;
  CTDParams init = CTDParams::init(cc, 1);

  std::vector<Query> train_qs, val_qs;
  for (const auto& q : fx.queries)
    (q.split == Split::validation ? val_qs : train_qs).push_back(q);

  TrainResult r = train(fx.gallery, train_qs, val_qs, fx.record_emb, fx.query_emb, init, tc);
  CHECK(!r.aborted);
  REQUIRE(r.curve.size() == 3);
  CHECK(r.best_epoch >= 0);
  for (const auto& c : r.curve) {
    CHECK(std::isfinite(c.train_loss));
    CHECK(c.val_r1 >= 0.0);
    CHECK(c.val_r1 <= 1.0);
  }
  CHECK(r.best_r1 >= r.curve.front().val_r1 - 1e-12);

  // determinism: identical config reproduces the curve exactly
  TrainResult r2 = train(fx.gallery, train_qs, val_qs, fx.record_emb, fx.query_emb,
                         CTDParams::init(cc, 1), tc);
  REQUIRE(r2.curve.size() == r.curve.size());
  for (size_t i = 0; i < r.curve.size(); ++i) {
    CHECK(r.curve[i].train_loss == r2.curve[i].train_loss);
    CHECK(r.curve[i].val_r1 == r2.curve[i].val_r1);
  }
}
