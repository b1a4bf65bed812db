#include "chronokey/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "chronokey/rng.hpp"

namespace chronokey {

using ordered_json = nlohmann::ordered_json;

const char* to_string(RecordType t) {
  switch (t) {
    case RecordType::event: return "event";
    case RecordType::no_event: return "no_event";
    case RecordType::neg_comment: return "neg_comment";
  }
  return "?";
}

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

RecordType record_type_from_string(const std::string& s) {
  if (s == "event") return RecordType::event;
  if (s == "no_event") return RecordType::no_event;
  if (s == "neg_comment") return RecordType::neg_comment;
  throw FormatError("unknown rtype '" + s + "'");
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw FormatError("unknown split '" + s + "'");
}

void Gallery::rebuild_index() {
  by_key.clear();
  for (size_t i = 0; i < records.size(); ++i) {
    by_key[key_to_ordinal(records[i].key, manifest)].push_back(i);
  }
}

const Record* Gallery::find(const std::string& id) const {
  for (const auto& r : records)
    if (r.id == id) return &r;
  return nullptr;
}

Interval Gallery::timeline() const {
  if (records.empty()) throw Error("gallery: timeline of empty gallery");
  int64_t lo = manifest.span(), hi = -1;
  for (const auto& r : records) {
    int64_t o = key_to_ordinal(r.key, manifest);
    lo = std::min(lo, o);
    hi = std::max(hi, o);
  }
  return {ordinal_to_key(lo, manifest), ordinal_to_key(hi, manifest)};
}

std::string Gallery::to_jsonl() const {
  std::string out;
  for (const auto& r : records) {
    ordered_json j;
    j["id"] = r.id;
    j["text"] = r.text;
    j["gong"] = r.key.gong;
    j["year"] = r.key.year;
    j["month"] = r.key.month;
    j["rtype"] = to_string(r.rtype);
    j["source"] = r.source;
    j["split"] = to_string(r.split);
    out += j.dump();
    out += '\n';
  }
  return out;
}

void Gallery::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("gallery: cannot write " + path);
  f << to_jsonl();
}

Gallery load_gallery(const std::string& path, CalendarManifest manifest) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("gallery: cannot read " + path);

  Gallery g;
  std::set<std::string> ids;
  std::string line;
  size_t lineno = 0;
  int max_year = 0, max_month = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw FormatError("gallery line " + std::to_string(lineno) + ": " + e.what());
    }
    Record r;
    try {
      r.id = j.at("id").get<std::string>();
      r.text = j.at("text").get<std::string>();
      r.key.gong = j.at("gong").get<int>();
      r.key.year = j.at("year").get<int>();
      r.key.month = j.at("month").get<int>();
      r.rtype = record_type_from_string(j.at("rtype").get<std::string>());
      r.source = j.value("source", std::string());
      r.split = split_from_string(j.value("split", std::string("train")));
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw FormatError("gallery line " + std::to_string(lineno) + ": " + e.what());
    }
    if (r.text.empty())
      throw FormatError("gallery line " + std::to_string(lineno) + ": empty text");
    if (!ids.insert(r.id).second)
      throw FormatError("gallery line " + std::to_string(lineno) + ": duplicate id '" + r.id +
                        "'");
    max_year = std::max(max_year, r.key.year);
    max_month = std::max(max_month, r.key.month);
    g.records.push_back(std::move(r));
  }

  // Pad the index space up to what the gallery actually uses; all downstream
  // math reads G/Y/M from the manifest only.
  manifest.G = std::max(manifest.G, static_cast<int>(manifest.gongs.size()));
  manifest.Y = std::max(manifest.Y, max_year);
  manifest.M = std::max(manifest.M, max_month);
  manifest.validate();
  g.manifest = std::move(manifest);

  for (size_t i = 0; i < g.records.size(); ++i) {
    try {
      key_to_ordinal(g.records[i].key, g.manifest);
    } catch (const BoundsError& e) {
      throw BoundsError("gallery record '" + g.records[i].id + "': " + e.what());
    }
  }
  g.rebuild_index();
  return g;
}

void synthesize_no_event(Gallery& gallery, const Interval& timeline) {
  int64_t lo = key_to_ordinal(timeline.start, gallery.manifest);
  int64_t hi = key_to_ordinal(timeline.end, gallery.manifest);
  if (lo > hi) throw Error("synthesize_no_event: empty timeline");

  gallery.rebuild_index();
  for (int64_t o = lo; o <= hi; ++o) {
    bool has_event = false, has_no_event = false;
    auto it = gallery.by_key.find(o);
    if (it != gallery.by_key.end()) {
      for (size_t idx : it->second) {
        if (gallery.records[idx].rtype == RecordType::event) has_event = true;
        if (gallery.records[idx].rtype == RecordType::no_event) has_no_event = true;
      }
    }
    if (has_event && has_no_event) {
      TimeKey k = ordinal_to_key(o, gallery.manifest);
      throw Error("month " + render_key(k, gallery.manifest) +
                  " holds both event and no_event records");
    }
    if (!has_event && !has_no_event) {
      TimeKey k = ordinal_to_key(o, gallery.manifest);
      Record r;
      r.id = "ne" + std::to_string(o);
      r.text = render_key(k, gallery.manifest) + "：《春秋》经文及三传于此月无事可书。";
      r.key = k;
      r.rtype = RecordType::no_event;
      r.source = "synthesized";
      gallery.records.push_back(std::move(r));
    }
  }
  gallery.rebuild_index();
}

std::vector<std::string> assign_splits(Gallery& gallery, double train_ratio, double val_ratio,
                                       double test_ratio, uint64_t seed) {
  double sum = train_ratio + val_ratio + test_ratio;
  if (train_ratio <= 0 || val_ratio <= 0 || test_ratio <= 0 || std::abs(sum - 1.0) > 1e-9)
    throw Error("assign_splits: ratios must be positive and sum to 1");

  std::vector<std::string> warnings;
  std::unordered_map<int64_t, Split> month_split;

  // Rounding carry across reigns: tracking cumulative exact targets keeps the
  // corpus-level split fractions within one month of the requested ratios even
  // though each reign is cut into whole-month blocks.
  double exact_val = 0.0, exact_test = 0.0;
  int64_t alloc_val = 0, alloc_test = 0;

  // Per-reign contiguous blocks over the reign's observed month range.
  for (int gi = 0; gi < static_cast<int>(gallery.manifest.gongs.size()); ++gi) {
    int64_t lo = gallery.manifest.span(), hi = -1;
    for (const auto& r : gallery.records) {
      if (r.key.gong != gi) continue;
      int64_t o = key_to_ordinal(r.key, gallery.manifest);
      lo = std::min(lo, o);
      hi = std::max(hi, o);
    }
    if (hi < 0) continue;  // reign absent from the gallery

    int64_t n = hi - lo + 1;
    exact_val += val_ratio * static_cast<double>(n);
    exact_test += test_ratio * static_cast<double>(n);
    int64_t n_val = std::llround(exact_val - static_cast<double>(alloc_val));
    int64_t n_test = std::llround(exact_test - static_cast<double>(alloc_test));
    n_val = std::clamp<int64_t>(n_val, n >= 3 ? 1 : 0, n - 2);
    n_test = std::clamp<int64_t>(n_test, n >= 3 ? 1 : 0, n - 1 - n_val);
    int64_t n_train = n - n_val - n_test;  // remainder goes to train
    if (n < 3 || n_val == 0 || n_test == 0) {
      warnings.push_back("reign '" + gallery.manifest.gongs[gi] + "' too short to split (" +
                         std::to_string(n) + " months); assigned entirely to train");
      for (int64_t o = lo; o <= hi; ++o) month_split[o] = Split::train;
      continue;
    }
    alloc_val += n_val;
    alloc_test += n_test;

    std::vector<std::pair<Split, int64_t>> blocks = {{Split::train, n_train},
                                                     {Split::validation, n_val},
                                                     {Split::test, n_test}};
    Rng rng(mix64(seed ^ (static_cast<uint64_t>(gi) * 0x9e3779b97f4a7c15ULL + 0x517A11ULL)));
    rng.shuffle(blocks);
    int64_t o = lo;
    for (const auto& [split, len] : blocks) {
      for (int64_t k = 0; k < len; ++k) month_split[o++] = split;
    }
  }

  for (auto& r : gallery.records) {
    auto it = month_split.find(key_to_ordinal(r.key, gallery.manifest));
    r.split = (it != month_split.end()) ? it->second : Split::train;
  }
  return warnings;
}

ValidationReport validate_gallery(const Gallery& gallery) {
  ValidationReport rep;
  std::set<std::string> ids;
  for (const auto& r : gallery.records) {
    if (!ids.insert(r.id).second) rep.violations.push_back("duplicate id '" + r.id + "'");
    try {
      key_to_ordinal(r.key, gallery.manifest);
    } catch (const BoundsError& e) {
      rep.violations.push_back("record '" + r.id + "': " + e.what());
    }
    if (r.text.empty()) rep.violations.push_back("record '" + r.id + "': empty text");
    rep.counts[to_string(r.split)][to_string(r.rtype)] += 1;
  }

  // Month-level findings: split leakage and event/no_event conflicts.
  std::map<int64_t, std::set<Split>> month_splits;
  std::map<int64_t, std::pair<bool, bool>> month_types;  // (event, no_event)
  for (const auto& r : gallery.records) {
    int64_t o;
    try {
      o = key_to_ordinal(r.key, gallery.manifest);
    } catch (const BoundsError&) {
      continue;
    }
    month_splits[o].insert(r.split);
    if (r.rtype == RecordType::event) month_types[o].first = true;
    if (r.rtype == RecordType::no_event) month_types[o].second = true;
  }
  for (const auto& [o, splits] : month_splits) {
    if (splits.size() > 1)
      rep.violations.push_back("split leakage: month ordinal " + std::to_string(o) +
                               " appears in " + std::to_string(splits.size()) + " splits");
  }
  for (const auto& [o, types] : month_types) {
    if (types.first && types.second)
      rep.violations.push_back("month ordinal " + std::to_string(o) +
                               " holds both event and no_event records");
  }
  return rep;
}

std::string ValidationReport::to_json() const {
  ordered_json j;
  j["violations"] = violations;
  j["warnings"] = warnings;
  ordered_json c;
  for (const auto& [split, by_type] : counts) {
    ordered_json t;
    for (const auto& [rtype, n] : by_type) t[rtype] = n;
    c[split] = t;
  }
  j["counts"] = c;
  return j.dump(2) + "\n";
}

}  // namespace chronokey
