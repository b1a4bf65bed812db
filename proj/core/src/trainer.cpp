#include "chronokey/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "chronokey/evalproto.hpp"
#include "chronokey/rng.hpp"

namespace chronokey {

namespace {

struct TensorRef {
  double* data;
  size_t n;
  bool is_matrix;
};

std::vector<TensorRef> collect(CTDParams& p) {
  std::vector<TensorRef> out;
  p.for_each_tensor([&](const char*, double* d, size_t n, bool m) { out.push_back({d, n, m}); });
  return out;
}

std::vector<TensorRef> collect(CTDGrads& g) {
  std::vector<TensorRef> out;
  g.for_each_tensor([&](const char*, double* d, size_t n, bool m) { out.push_back({d, n, m}); });
  return out;
}

}  // namespace

AdamState AdamState::zeros(CTDParams& params) {
  AdamState s;
  params.for_each_tensor([&](const char*, double*, size_t n, bool) {
    s.m.emplace_back(n, 0.0);
    s.v.emplace_back(n, 0.0);
  });
  return s;
}

double lr_multiplier(int64_t step, int64_t total_steps, double warmup_frac) {
  if (total_steps <= 0) return 0.0;
  int64_t warmup = std::max<int64_t>(1, static_cast<int64_t>(warmup_frac * total_steps));
  if (step <= warmup) return static_cast<double>(step) / static_cast<double>(warmup);
  if (total_steps <= warmup) return 1.0;
  double mult = static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup);
  return std::max(0.0, mult);
}

void optimizer_step(CTDParams& params, CTDGrads& grads, AdamState& state, const TrainConfig& cfg,
                    double lr_now) {
  std::vector<TensorRef> ps = collect(params);
  std::vector<TensorRef> gs = collect(grads);
  if (ps.size() != gs.size() || ps.size() != state.m.size())
    throw Error("optimizer: tensor layout mismatch");
  state.t += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (size_t k = 0; k < ps.size(); ++k) {
    if (ps[k].n != gs[k].n) throw Error("optimizer: tensor size mismatch");
    double* p = ps[k].data;
    const double* g = gs[k].data;
    double* m = state.m[k].data();
    double* v = state.v[k].data();
    for (size_t i = 0; i < ps[k].n; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
      if (ps[k].is_matrix) update += cfg.weight_decay * p[i];
      p[i] -= lr_now * update;
    }
  }
}

std::vector<BatchTensors> make_batches(const std::vector<Query>& train_queries,
                                       const Gallery& gallery,
                                       const EmbeddingMatrix& record_emb,
                                       const EmbeddingMatrix& query_emb, const TrainConfig& cfg,
                                       int epoch) {
  if (cfg.batch_size < 2) throw Error("trainer: batch_size must be >= 2");
  std::unordered_map<std::string, const Record*> by_id;
  for (const Record& r : gallery.records) by_id.emplace(r.id, &r);

  std::vector<size_t> eligible;
  for (size_t i = 0; i < train_queries.size(); ++i)
    if (train_queries[i].split == Split::train && !train_queries[i].gt_ids.empty())
      eligible.push_back(i);

  Rng rng(mix64(cfg.seed ^ (static_cast<uint64_t>(epoch) * 0x9e3779b97f4a7c15ULL + 0x7EA1ULL)));
  rng.shuffle(eligible);

  int H = cfg.hash_H;
  std::vector<BatchTensors> batches;
  for (size_t start = 0; start < eligible.size(); start += cfg.batch_size) {
    size_t B = std::min(cfg.batch_size, eligible.size() - start);
    if (B < 2) break;  // InfoNCE needs at least one in-batch negative
    if (B < cfg.batch_size && !cfg.keep_short_batch) break;
    BatchTensors bt;
    bt.q_emb = Mat(B, H);
    bt.d_emb = Mat(B, H);
    bt.P = Mat(B, B);
    bt.d_labels.resize(B);
    bt.q_intervals.resize(B);
    for (size_t i = 0; i < B; ++i) {
      const Query& q = train_queries[eligible[start + i]];
      const float* qe = query_emb.vec(query_emb.at(q.id));
      for (int k = 0; k < H; ++k) bt.q_emb(i, k) = qe[k];
      const std::string& gold = q.gt_ids[rng.bounded(q.gt_ids.size())];
      auto it = by_id.find(gold);
      if (it == by_id.end()) throw Error("trainer: ground-truth id '" + gold + "' not in gallery");
      const float* de = record_emb.vec(record_emb.at(gold));
      for (int k = 0; k < H; ++k) bt.d_emb(i, k) = de[k];
      bt.d_labels[i] = it->second->key;
      bt.q_intervals[i] = q.interval;
    }
    for (size_t i = 0; i < B; ++i)
      for (size_t j = 0; j < B; ++j)
        bt.P(i, j) = interval_overlap(bt.q_intervals[i], {bt.d_labels[j], bt.d_labels[j]},
                                      gallery.manifest)
                         ? 1.0
                         : 0.0;
    batches.push_back(std::move(bt));
  }
  return batches;
}

TrainResult train(const Gallery& gallery, const std::vector<Query>& train_queries,
                  const std::vector<Query>& val_queries, const EmbeddingMatrix& record_emb,
                  const EmbeddingMatrix& query_emb, CTDParams initial, const TrainConfig& cfg) {
  TrainResult res;
  res.best = initial;
  res.last = initial;

  ProtocolView val_view = apply_protocol(gallery, val_queries, official_protocol());

  CTDParams params = std::move(initial);
  AdamState state = AdamState::zeros(params);

  size_t batches_per_epoch =
      make_batches(train_queries, gallery, record_emb, query_emb, cfg, 0).size();
  if (batches_per_epoch == 0) throw Error("trainer: no usable training batches");
  int64_t total_steps = static_cast<int64_t>(batches_per_epoch) * cfg.epochs;
  int64_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs && !res.aborted; ++epoch) {
    std::vector<BatchTensors> batches =
        make_batches(train_queries, gallery, record_emb, query_emb, cfg, epoch);
    double loss_sum = 0.0;
    double lr_now = 0.0;
    for (BatchTensors& bt : batches) {
      LossResult lr_res;
      try {
        lr_res = loss_total(bt, params, cfg.loss);
      } catch (const Error& e) {
        res.aborted = true;
        res.abort_reason = e.what();
        break;
      }
      loss_sum += lr_res.total;
      step += 1;
      lr_now = cfg.lr * lr_multiplier(step, total_steps, cfg.warmup_frac);
      optimizer_step(params, lr_res.grads, state, cfg, lr_now);
    }
    if (res.aborted) break;

    double val_r1 = 0.0;
    if (!val_view.queries.empty()) {
      CTDScorer scorer(params, record_emb, val_view.candidate_ids, ScoreMode::ctd, cfg.hash_H,
                       cfg.hash_seed);
      auto ranked = rank_all(val_view.queries, scorer, 10, cfg.threads);
      val_r1 = compute_metrics(ranked, val_view.queries).r1;
    }

    res.last = params;
    res.curve.push_back({epoch, loss_sum / static_cast<double>(batches.size()), val_r1, lr_now});
    if (res.best_epoch < 0 || val_r1 > res.best_r1) {
      res.best = params;
      res.best_epoch = epoch;
      res.best_r1 = val_r1;
    }
  }
  return res;
}

void save_curve(const std::vector<CurvePoint>& curve, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("curve: cannot write " + path);
  f << "epoch,train_loss,val_r1,lr\n";
  for (const CurvePoint& c : curve)
    f << c.epoch << "," << c.train_loss << "," << c.val_r1 << "," << c.lr << "\n";
}

}  // namespace chronokey
