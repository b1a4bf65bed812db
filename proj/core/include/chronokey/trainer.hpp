#pragma once

#include <string>
#include <vector>

#include "chronokey/ctd.hpp"
#include "chronokey/embed.hpp"
#include "chronokey/querygen.hpp"

namespace chronokey {

struct TrainConfig {
  int epochs = 30;
  size_t batch_size = 32;
  double lr = 3e-3;
  double warmup_frac = 0.1;  // linear warmup, then linear decay to zero
  double weight_decay = 0.01;  // decoupled, matrices only
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  uint64_t seed = 0;
  bool keep_short_batch = true;  // keep a final batch of size >= 2
  LossOptions loss;
  int hash_H = 64;
  uint64_t hash_seed = 0;
  int threads = 1;
};

/// Adam moment buffers plus the step counter; one slot per trainable tensor.
struct AdamState {
  std::vector<std::vector<double>> m, v;
  int64_t t = 0;

  static AdamState zeros(CTDParams& params);
};

/// Linear warmup to 1 over the first warmup_frac of total_steps, then linear
/// decay to 0 at total_steps. step is 1-based.
double lr_multiplier(int64_t step, int64_t total_steps, double warmup_frac);

void optimizer_step(CTDParams& params, CTDGrads& grads, AdamState& state,
                    const TrainConfig& cfg, double lr_now);

/// One epoch's batches: eligible train queries shuffled, one gold record
/// sampled per query, positive mask from interval overlap. Deterministic in
/// (seed, epoch).
std::vector<BatchTensors> make_batches(const std::vector<Query>& train_queries,
                                       const Gallery& gallery,
                                       const EmbeddingMatrix& record_emb,
                                       const EmbeddingMatrix& query_emb,
                                       const TrainConfig& cfg, int epoch);

struct CurvePoint {
  int epoch = 0;
  double train_loss = 0.0;
  double val_r1 = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  CTDParams best;   // highest validation R@1 (ties: earlier epoch)
  CTDParams last;   // after the final completed epoch
  std::vector<CurvePoint> curve;
  int best_epoch = -1;
  double best_r1 = 0.0;
  bool aborted = false;          // non-finite loss/gradient; best/last are the
  std::string abort_reason;      // last finite state
};

/// Full loop: shuffled batches, AdamW with the linear schedule, per-epoch
/// validation R@1 (official candidate pool) for checkpoint selection.
TrainResult train(const Gallery& gallery, const std::vector<Query>& train_queries,
                  const std::vector<Query>& val_queries, const EmbeddingMatrix& record_emb,
                  const EmbeddingMatrix& query_emb, CTDParams initial, const TrainConfig& cfg);

void save_curve(const std::vector<CurvePoint>& curve, const std::string& path);

}  // namespace chronokey
