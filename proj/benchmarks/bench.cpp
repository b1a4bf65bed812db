#include <benchmark/benchmark.h>

#include "chronokey/ctd.hpp"
#include "chronokey/embed.hpp"
#include "chronokey/lexical.hpp"
#include "chronokey/rng.hpp"
#include "chronokey/synth.hpp"

using namespace chronokey;

namespace {

SynthResult make_corpus() {
  SynthSpec spec;
  spec.seed = 7;
  SynthResult r = generate_corpus(spec);
  synthesize_no_event(r.gallery, r.gallery.timeline());
  return r;
}

void BM_HashEncode(benchmark::State& state) {
  std::string text = "鲁隐公三年夏四月，公会诸侯盟于郑，既盟而归。";
  for (auto _ : state) benchmark::DoNotOptimize(hash_encode(text, 64, 1));
}
BENCHMARK(BM_HashEncode);

void BM_Bm25Search(benchmark::State& state) {
  static SynthResult corpus = make_corpus();
  static InvertedIndex idx = build_index(corpus.gallery);
  std::string query = "鲁桓公三年五月有何事？";
  for (auto _ : state) benchmark::DoNotOptimize(bm25_search(idx, query));
}
BENCHMARK(BM_Bm25Search);

void BM_TimeKdeRerank(benchmark::State& state) {
  static SynthResult corpus = make_corpus();
  static InvertedIndex idx = build_index(corpus.gallery);
  auto ranked = bm25_search(idx, "鲁桓公三年五月有何事？", 1.2, 0.75, 100);
  for (auto _ : state) benchmark::DoNotOptimize(timekde_rerank(ranked, 1.5, 0.5));
}
BENCHMARK(BM_TimeKdeRerank);

void BM_LossTotal(benchmark::State& state) {
  CTDConfig cfg;
  cfg.G = 4;
  cfg.Y = 8;
  cfg.M = 13;
  CTDParams p = CTDParams::init(cfg, 1);
  p.gamma = 0.1;
  p.epsilon = 0.1;
  size_t B = static_cast<size_t>(state.range(0));
  Rng rng(3);
  BatchTensors bt;
  bt.q_emb = Mat(B, cfg.H);
  bt.d_emb = Mat(B, cfg.H);
  for (double& v : bt.q_emb.data) v = 2.0 * rng.uniform() - 1.0;
  for (double& v : bt.d_emb.data) v = 2.0 * rng.uniform() - 1.0;
  bt.d_labels.resize(B);
  bt.q_intervals.resize(B);
  bt.P = Mat(B, B);
  for (size_t i = 0; i < B; ++i) {
    bt.d_labels[i] = {static_cast<int>(rng.bounded(cfg.G)),
                      static_cast<int>(rng.bounded(cfg.Y)) + 1,
                      static_cast<int>(rng.bounded(cfg.M)) + 1};
    bt.q_intervals[i] = {bt.d_labels[i], bt.d_labels[i]};
    bt.P(i, i) = 1.0;
  }
  LossOptions opts;
  for (auto _ : state) benchmark::DoNotOptimize(loss_total(bt, p, opts).total);
}
BENCHMARK(BM_LossTotal)->Arg(8)->Arg(32);

void BM_ScoreMatrix(benchmark::State& state) {
  CTDConfig cfg;
  cfg.G = 4;
  cfg.Y = 8;
  cfg.M = 13;
  CTDParams p = CTDParams::init(cfg, 1);
  p.gamma = 0.1;
  p.epsilon = 0.1;
  size_t B = 32;
  Rng rng(4);
  BatchTensors bt;
  bt.q_emb = Mat(B, cfg.H);
  bt.d_emb = Mat(B, cfg.H);
  for (double& v : bt.q_emb.data) v = 2.0 * rng.uniform() - 1.0;
  for (double& v : bt.d_emb.data) v = 2.0 * rng.uniform() - 1.0;
  bt.d_labels.resize(B, {0, 1, 1});
  bt.q_intervals.resize(B, {{0, 1, 1}, {0, 1, 1}});
  bt.P = Mat(B, B);
  for (auto _ : state) benchmark::DoNotOptimize(score_matrix(bt, p, ScoreMode::ctd));
}
BENCHMARK(BM_ScoreMatrix);

void BM_ScanAnnal(benchmark::State& state) {
  CalendarManifest m;
  m.gongs = {"鲁隐公", "鲁桓公"};
  m.G = 2;
  m.Y = 18;
  m.M = 13;
  std::vector<std::string> lines;
  for (int y = 1; y <= 11; ++y) {
    lines.push_back(render_cn_number(y) + "年，春，王正月。");
    lines.push_back("三月，公及邾仪父盟于蔑。");
    lines.push_back("夏五月，郑伯克段于鄢。");
    lines.push_back("冬十二月，祭伯来。");
  }
  for (auto _ : state) benchmark::DoNotOptimize(scan_annal_stream(lines, m));
}
BENCHMARK(BM_ScanAnnal);

}  // namespace

BENCHMARK_MAIN();
