// Command-line front end for the chronokey retrieval engine.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "chronokey/calendar.hpp"
#include "chronokey/corpus.hpp"
#include "chronokey/ctd.hpp"
#include "chronokey/embed.hpp"
#include "chronokey/evalproto.hpp"
#include "chronokey/lexical.hpp"
#include "chronokey/querygen.hpp"
#include "chronokey/synth.hpp"
#include "chronokey/trainer.hpp"
#include "json.hpp"

using namespace chronokey;
using nlohmann::ordered_json;

namespace {

constexpr int kExitError = 1;
constexpr int kExitValidation = 2;

int default_threads() {
  if (const char* env = std::getenv("CHRONOKEY_THREADS")) {
    int t = std::atoi(env);
    if (t > 0) return t;
  }
  return 1;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path);
  f << text;
}

Gallery load_corpus(const std::string& manifest_path, const std::string& gallery_path) {
  CalendarManifest manifest = CalendarManifest::load(manifest_path);
  return load_gallery(gallery_path, manifest);
}

std::vector<Query> queries_for_split(const std::vector<Query>& all, const std::string& split) {
  if (split == "all") return all;
  Split s = split_from_string(split);
  std::vector<Query> out;
  for (const Query& q : all)
    if (q.split == s) out.push_back(q);
  return out;
}

struct ScorerBundle {
  std::unique_ptr<Scorer> scorer;
  // CTD scorers keep references; own the backing objects here.
  std::unique_ptr<CTDParams> params;
  std::unique_ptr<EmbeddingMatrix> emb;
};

ScorerBundle make_scorer(const std::string& name, const Gallery& gallery,
                         const std::vector<std::string>& candidate_ids,
                         const std::string& checkpoint_path, const std::string& embeddings_path,
                         double kde_weight, double kde_bandwidth, uint64_t hash_seed) {
  ScorerBundle b;
  if (name == "bm25") {
    b.scorer = std::make_unique<Bm25Scorer>(gallery, candidate_ids);
  } else if (name == "bm25+timekde") {
    b.scorer =
        std::make_unique<Bm25Scorer>(gallery, candidate_ids, 1.2, 0.75, kde_weight, kde_bandwidth);
  } else if (name == "sem" || name == "abs" || name == "ctd") {
    if (checkpoint_path.empty() || embeddings_path.empty())
      throw Error("scorer '" + name + "' needs --checkpoint and --embeddings");
    b.params = std::make_unique<CTDParams>(
        CTDParams::load(checkpoint_path, gallery.manifest.hash()));
    b.emb = std::make_unique<EmbeddingMatrix>(EmbeddingMatrix::load(embeddings_path));
    ScoreMode mode = name == "sem"   ? ScoreMode::sem
                     : name == "abs" ? ScoreMode::abs
                                     : ScoreMode::ctd;
    b.scorer = std::make_unique<CTDScorer>(*b.params, *b.emb, candidate_ids, mode,
                                           b.params->cfg.H, hash_seed);
  } else {
    throw Error("unknown scorer '" + name + "' (bm25, bm25+timekde, sem, abs, ctd)");
  }
  return b;
}

ordered_json metrics_to_json(const Metrics& m) {
  return {{"R@1", m.r1},       {"R@5", m.r5},         {"R@10", m.r10},
          {"MRR@10", m.mrr10}, {"nDCG@10", m.ndcg10}, {"n_queries", m.n_queries}};
}

void print_metrics(const std::string& label, const Metrics& m, bool as_json) {
  if (as_json) {
    ordered_json j = metrics_to_json(m);
    j["label"] = label;
    std::cout << j.dump() << "\n";
  } else {
    std::cout << label << ": R@1=" << m.r1 << " R@5=" << m.r5 << " R@10=" << m.r10
              << " MRR@10=" << m.mrr10 << " nDCG@10=" << m.ndcg10 << " n=" << m.n_queries
              << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chronokey: time-keyed retrieval over reign-calendar corpora"};
  app.require_subcommand(1);

  bool as_json = false;
  int threads = default_threads();
  app.add_flag("--json", as_json, "machine-readable output");
  app.add_option("--threads", threads, "worker threads for ranking");

  // ---- scan ----
  auto* scan = app.add_subcommand("scan", "normalize annal lines into keyed records");
  std::string scan_manifest, scan_in, scan_out;
  scan->add_option("--manifest", scan_manifest)->required();
  scan->add_option("--in", scan_in, "one annal line per input line")->required();
  scan->add_option("--out", scan_out, "gallery JSONL")->required();

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a controlled synthetic corpus");
  SynthSpec synth_spec;
  std::string synth_gallery, synth_manifest_out, synth_ledger;
  synth->add_option("--years", synth_spec.Y);
  synth->add_option("--months", synth_spec.M);
  synth->add_option("--event-rate", synth_spec.event_rate);
  synth->add_option("--distractor-rate", synth_spec.distractor_rate);
  synth->add_option("--seed", synth_spec.seed);
  synth->add_option("--gallery", synth_gallery)->required();
  synth->add_option("--manifest-out", synth_manifest_out)->required();
  synth->add_option("--ledger", synth_ledger);

  // ---- ingest ----
  auto* ingest = app.add_subcommand(
      "ingest", "fill no-event months, assign splits, validate the gallery");
  std::string ing_manifest, ing_in, ing_out, ing_report;
  double ing_train = 0.7, ing_val = 0.15, ing_test = 0.15;
  uint64_t ing_seed = 0;
  ingest->add_option("--manifest", ing_manifest)->required();
  ingest->add_option("--in", ing_in)->required();
  ingest->add_option("--out", ing_out)->required();
  ingest->add_option("--report", ing_report, "validation report JSON");
  ingest->add_option("--train", ing_train);
  ingest->add_option("--val", ing_val);
  ingest->add_option("--test", ing_test);
  ingest->add_option("--seed", ing_seed);

  // ---- queries ----
  auto* queries = app.add_subcommand("queries", "instantiate the query templates");
  std::string q_manifest, q_gallery, q_out, q_templates;
  bool q_cross_reign = false;
  queries->add_option("--manifest", q_manifest)->required();
  queries->add_option("--gallery", q_gallery)->required();
  queries->add_option("--out", q_out)->required();
  queries->add_option("--templates", q_templates, "template JSON (default: built-in 52)");
  queries->add_flag("--cross-reign", q_cross_reign, "keep year windows that cross reigns");

  // ---- index ----
  auto* index = app.add_subcommand("index", "build the lexical inverted index");
  std::string ix_manifest, ix_gallery, ix_out;
  index->add_option("--manifest", ix_manifest)->required();
  index->add_option("--gallery", ix_gallery)->required();
  index->add_option("--out", ix_out)->required();

  // ---- search ----
  auto* search = app.add_subcommand("search", "rank one query against an index");
  std::string se_index, se_query;
  double se_kde_w = 0.0, se_kde_h = 1.0;
  size_t se_topn = 10;
  search->add_option("--index", se_index)->required();
  search->add_option("--query", se_query)->required();
  search->add_option("--kde-weight", se_kde_w, "0 disables the density rerank");
  search->add_option("--kde-bandwidth", se_kde_h);
  search->add_option("--topn", se_topn);

  // ---- encode ----
  auto* encode = app.add_subcommand("encode", "embed every gallery record");
  std::string en_manifest, en_gallery, en_out;
  int en_dim = 64;
  uint64_t en_seed = 0;
  bool en_no_norm = false;
  encode->add_option("--manifest", en_manifest)->required();
  encode->add_option("--gallery", en_gallery)->required();
  encode->add_option("--out", en_out)->required();
  encode->add_option("--dim", en_dim);
  encode->add_option("--seed", en_seed);
  encode->add_flag("--no-normalize", en_no_norm);

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "fit the temporal dual-encoder head");
  std::string tr_manifest, tr_gallery, tr_queries, tr_emb, tr_outdir;
  TrainConfig tr_cfg;
  std::string tr_smoothing = "uniform";
  bool tr_no_multi = false, tr_no_bias = false, tr_no_ctx = false;
  uint64_t tr_init_seed = 0;
  train_cmd->add_option("--manifest", tr_manifest)->required();
  train_cmd->add_option("--gallery", tr_gallery)->required();
  train_cmd->add_option("--queries", tr_queries)->required();
  train_cmd->add_option("--embeddings", tr_emb)->required();
  train_cmd->add_option("--out-dir", tr_outdir)->required();
  train_cmd->add_option("--epochs", tr_cfg.epochs);
  train_cmd->add_option("--batch", tr_cfg.batch_size);
  train_cmd->add_option("--lr", tr_cfg.lr);
  train_cmd->add_option("--weight-decay", tr_cfg.weight_decay);
  train_cmd->add_option("--lambda-time", tr_cfg.loss.lambda_time);
  train_cmd->add_option("--sigma", tr_cfg.loss.sigma);
  train_cmd->add_option("--smoothing", tr_smoothing, "uniform or neighbor");
  train_cmd->add_flag("--no-multi", tr_no_multi, "single-positive contrastive loss");
  train_cmd->add_flag("--no-bias", tr_no_bias, "drop the relative temporal bias");
  train_cmd->add_flag("--no-ctx", tr_no_ctx, "drop the absolute context injection");
  train_cmd->add_option("--seed", tr_cfg.seed);
  train_cmd->add_option("--init-seed", tr_init_seed);
  train_cmd->add_option("--hash-seed", tr_cfg.hash_seed);

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "score a query set under one protocol mode");
  std::string ev_manifest, ev_gallery, ev_queries, ev_scorer = "bm25";
  std::string ev_mode = "neg1_ne1_dq0", ev_split = "test", ev_out, ev_trec;
  std::string ev_ckpt, ev_emb;
  double ev_kde_w = 1.0, ev_kde_h = 1.0;
  uint64_t ev_hash_seed = 0;
  eval_cmd->add_option("--manifest", ev_manifest)->required();
  eval_cmd->add_option("--gallery", ev_gallery)->required();
  eval_cmd->add_option("--queries", ev_queries)->required();
  eval_cmd->add_option("--scorer", ev_scorer, "bm25, bm25+timekde, sem, abs, ctd");
  eval_cmd->add_option("--mode", ev_mode);
  eval_cmd->add_option("--split", ev_split, "train, validation, test or all");
  eval_cmd->add_option("--checkpoint", ev_ckpt);
  eval_cmd->add_option("--embeddings", ev_emb);
  eval_cmd->add_option("--kde-weight", ev_kde_w);
  eval_cmd->add_option("--kde-bandwidth", ev_kde_h);
  eval_cmd->add_option("--hash-seed", ev_hash_seed);
  eval_cmd->add_option("--out", ev_out, "full run report JSON");
  eval_cmd->add_option("--trec", ev_trec, "TREC run file");

  // ---- grid ----
  auto* grid_cmd = app.add_subcommand("grid", "evaluate one scorer across all protocol modes");
  std::string gr_manifest, gr_gallery, gr_queries, gr_scorer = "bm25", gr_split = "test";
  std::string gr_outdir, gr_ckpt, gr_emb;
  double gr_kde_w = 1.0, gr_kde_h = 1.0;
  uint64_t gr_hash_seed = 0;
  grid_cmd->add_option("--manifest", gr_manifest)->required();
  grid_cmd->add_option("--gallery", gr_gallery)->required();
  grid_cmd->add_option("--queries", gr_queries)->required();
  grid_cmd->add_option("--scorer", gr_scorer);
  grid_cmd->add_option("--split", gr_split);
  grid_cmd->add_option("--checkpoint", gr_ckpt);
  grid_cmd->add_option("--embeddings", gr_emb);
  grid_cmd->add_option("--kde-weight", gr_kde_w);
  grid_cmd->add_option("--kde-bandwidth", gr_kde_h);
  grid_cmd->add_option("--hash-seed", gr_hash_seed);
  grid_cmd->add_option("--out-dir", gr_outdir, "one report JSON per mode");

  // ---- report ----
  auto* report_cmd = app.add_subcommand("report", "summarize saved run reports");
  std::vector<std::string> rp_in;
  report_cmd->add_option("--in", rp_in, "report JSON files")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*scan) {
      CalendarManifest manifest = CalendarManifest::load(scan_manifest);
      std::vector<std::string> lines = read_lines(scan_in);
      std::vector<ScannedLine> scanned = scan_annal_stream(lines, manifest);
      Gallery g;
      g.manifest = manifest;
      for (size_t i = 0; i < scanned.size(); ++i) {
        Record r;
        r.id = "r" + std::to_string(i);
        r.text = scanned[i].line;
        r.key = scanned[i].key;
        r.rtype = RecordType::event;
        r.source = "scan";
        g.records.push_back(std::move(r));
      }
      g.rebuild_index();
      g.save(scan_out);
      std::cout << "scanned " << g.records.size() << " records\n";
    } else if (*synth) {
      SynthResult r = generate_corpus(synth_spec);
      r.gallery.manifest.save(synth_manifest_out);
      r.gallery.save(synth_gallery);
      if (!synth_ledger.empty()) write_text(synth_ledger, r.ledger_json + "\n");
      std::cout << "generated " << r.gallery.records.size() << " records over "
                << r.gallery.manifest.span() << " month slots\n";
    } else if (*ingest) {
      Gallery g = load_corpus(ing_manifest, ing_in);
      synthesize_no_event(g, g.timeline());
      std::vector<std::string> warnings = assign_splits(g, ing_train, ing_val, ing_test, ing_seed);
      ValidationReport rep = validate_gallery(g);
      for (const std::string& w : warnings) rep.warnings.push_back(w);
      g.save(ing_out);
      if (!ing_report.empty()) write_text(ing_report, rep.to_json() + "\n");
      for (const std::string& w : rep.warnings) std::cerr << "warning: " << w << "\n";
      for (const std::string& v : rep.violations) std::cerr << "violation: " << v << "\n";
      std::cout << (rep.clean() ? "gallery valid, " : "gallery INVALID, ") << g.records.size()
                << " records\n";
      if (!rep.clean()) return kExitValidation;
    } else if (*queries) {
      Gallery g = load_corpus(q_manifest, q_gallery);
      std::vector<QueryTemplate> tpl =
          q_templates.empty() ? default_templates() : load_templates(q_templates);
      QueryGenConfig cfg;
      cfg.cross_reign_year = q_cross_reign;
      QueryGenResult r = instantiate_queries(g, tpl, cfg);
      save_queries(r.queries, q_out);
      std::cout << r.queries.size() << " queries (" << r.skipped_out_of_timeline
                << " out-of-timeline, " << r.skipped_empty_ground_truth
                << " empty-truth skipped)\n";
    } else if (*index) {
      Gallery g = load_corpus(ix_manifest, ix_gallery);
      InvertedIndex idx = build_index(g);
      idx.save(ix_out);
      std::cout << "indexed " << idx.N << " docs, " << idx.postings.size() << " terms\n";
    } else if (*search) {
      InvertedIndex idx = InvertedIndex::load(se_index);
      std::vector<ScoredDoc> hits = bm25_search(idx, se_query, 1.2, 0.75, std::max(se_topn, size_t(100)));
      if (se_kde_w != 0.0) hits = timekde_rerank(hits, se_kde_h, se_kde_w);
      if (hits.size() > se_topn) hits.resize(se_topn);
      for (const ScoredDoc& d : hits) {
        if (as_json)
          std::cout << ordered_json{{"id", d.id}, {"score", d.score}, {"month", d.month}}.dump()
                    << "\n";
        else
          std::cout << d.id << "\t" << d.score << "\n";
      }
    } else if (*encode) {
      Gallery g = load_corpus(en_manifest, en_gallery);
      std::vector<std::string> ids, texts;
      for (const Record& r : g.records) {
        ids.push_back(r.id);
        texts.push_back(r.text);
      }
      EmbeddingMatrix emb = hash_encode_all(ids, texts, en_dim, en_seed, !en_no_norm);
      emb.save(en_out);
      std::cout << "encoded " << emb.count() << " records at H=" << en_dim << "\n";
    } else if (*train_cmd) {
      Gallery g = load_corpus(tr_manifest, tr_gallery);
      std::vector<Query> qs = load_queries(tr_queries);
      EmbeddingMatrix emb = EmbeddingMatrix::load(tr_emb);
      tr_cfg.hash_H = emb.H;
      tr_cfg.threads = threads;
      tr_cfg.loss.smoothing =
          tr_smoothing == "neighbor" ? SmoothingMode::neighbor : SmoothingMode::uniform;
      tr_cfg.loss.use_multi = !tr_no_multi;
      tr_cfg.loss.use_bias = !tr_no_bias;
      tr_cfg.loss.use_ctx = !tr_no_ctx;

      std::vector<std::string> qids, qtexts;
      for (const Query& q : qs) {
        qids.push_back(q.id);
        qtexts.push_back(q.text);
      }
      EmbeddingMatrix qemb = hash_encode_all(qids, qtexts, emb.H, tr_cfg.hash_seed);

      CTDConfig cc;
      cc.H = emb.H;
      cc.G = g.manifest.G;
      cc.Y = g.manifest.Y;
      cc.M = g.manifest.M;
      CTDParams init = CTDParams::init(cc, tr_init_seed);

      std::vector<Query> train_qs = queries_for_split(qs, "train");
      std::vector<Query> val_qs = queries_for_split(qs, "validation");
      TrainResult r = train(g, train_qs, val_qs, emb, qemb, std::move(init), tr_cfg);

      uint64_t mh = g.manifest.hash();
      std::filesystem::create_directories(tr_outdir);
      r.best.save(tr_outdir + "/best.ckpt", mh);
      r.last.save(tr_outdir + "/last.ckpt", mh);
      save_curve(r.curve, tr_outdir + "/curve.csv");
      if (r.aborted) {
        std::cerr << "training aborted: " << r.abort_reason << "\n";
        return kExitError;
      }
      std::cout << "trained " << r.curve.size() << " epochs, best val R@1=" << r.best_r1
                << " at epoch " << r.best_epoch << "\n";
    } else if (*eval_cmd || *grid_cmd) {
      bool is_grid = static_cast<bool>(*grid_cmd);
      const std::string& manifest_p = is_grid ? gr_manifest : ev_manifest;
      const std::string& gallery_p = is_grid ? gr_gallery : ev_gallery;
      const std::string& queries_p = is_grid ? gr_queries : ev_queries;
      const std::string& scorer_n = is_grid ? gr_scorer : ev_scorer;
      const std::string& split_n = is_grid ? gr_split : ev_split;
      const std::string& ckpt_p = is_grid ? gr_ckpt : ev_ckpt;
      const std::string& emb_p = is_grid ? gr_emb : ev_emb;
      double kde_w = is_grid ? gr_kde_w : ev_kde_w;
      double kde_h = is_grid ? gr_kde_h : ev_kde_h;
      uint64_t hash_seed = is_grid ? gr_hash_seed : ev_hash_seed;

      Gallery g = load_corpus(manifest_p, gallery_p);
      std::vector<Query> qs = queries_for_split(load_queries(queries_p), split_n);

      std::vector<ProtocolMode> modes =
          is_grid ? protocol_grid() : std::vector<ProtocolMode>{ProtocolMode::parse(ev_mode)};
      for (ProtocolMode mode : modes) {
        ProtocolView view = apply_protocol(g, qs, mode);
        ScorerBundle sb = make_scorer(scorer_n, g, view.candidate_ids, ckpt_p, emb_p, kde_w,
                                      kde_h, hash_seed);
        RunReport rep = evaluate(view.queries, *sb.scorer, mode, threads);
        print_metrics(scorer_n + " " + mode.name(), rep.overall, as_json);
        if (is_grid) {
          if (!gr_outdir.empty()) {
            std::filesystem::create_directories(gr_outdir);
            rep.save(gr_outdir + "/" + mode.name() + ".json");
          }
        } else {
          if (!ev_out.empty()) rep.save(ev_out);
          if (!ev_trec.empty()) export_trec(rep.per_query, scorer_n, ev_trec);
        }
      }
    } else if (*report_cmd) {
      for (const std::string& path : rp_in) {
        std::ifstream f(path);
        if (!f) throw Error("cannot read " + path);
        ordered_json j = ordered_json::parse(f);
        std::cout << path << " [" << j.value("scorer", "?") << ", " << j.value("mode", "?")
                  << "]";
        const auto& o = j.at("overall");
        for (const char* k : {"R@1", "R@5", "R@10", "MRR@10", "nDCG@10"})
          std::cout << " " << k << "=" << o.at(k).get<double>();
        std::cout << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return 0;
}
