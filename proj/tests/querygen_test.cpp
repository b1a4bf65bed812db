#include "chronokey/querygen.hpp"

#include <filesystem>
#include <set>

#include "doctest.h"

using namespace chronokey;

namespace {

Gallery tiny_gallery() {
  Gallery g;
  g.manifest.gongs = {"鲁隐公", "鲁桓公"};
  g.manifest.G = 2;
  g.manifest.Y = 3;
  g.manifest.M = 13;
  auto add = [&](std::string id, TimeKey key, RecordType t = RecordType::event) {
    Record r;
    r.id = std::move(id);
    r.text = "文";
    r.key = key;
    r.rtype = t;
    g.records.push_back(std::move(r));
  };
  add("a", {0, 1, 1});
  add("b", {0, 1, 3});
  add("n1", {0, 1, 2}, RecordType::no_event);
  add("c", {0, 2, 1});
  add("x", {0, 2, 1}, RecordType::neg_comment);  // never ground truth
  add("d", {1, 1, 5});
  g.rebuild_index();
  return g;
}

}  // namespace

TEST_CASE("default template inventory matches the fixed layout") {
  auto t = default_templates();
  REQUIRE(t.size() == 52);
  for (size_t i = 0; i < t.size(); ++i) CHECK(t[i].template_id == static_cast<int>(i) + 1);
  auto in = [&](int lo, int hi, TemplateGroup g) {
    for (int id = lo; id <= hi; ++id) CHECK(t[id - 1].group == g);
  };
  in(1, 12, TemplateGroup::BASE_CONTENT);
  in(13, 20, TemplateGroup::BASE_EXISTENCE);
  in(21, 26, TemplateGroup::MONTH_PAST);
  in(27, 31, TemplateGroup::MONTH_FUTURE);
  in(32, 36, TemplateGroup::MONTH_AROUND);
  in(37, 41, TemplateGroup::MONTH_RANGE);
  in(42, 46, TemplateGroup::YEAR_CURRENT);
  in(47, 49, TemplateGroup::YEAR_PAST);
  in(50, 52, TemplateGroup::YEAR_FUTURE);
  // window sizes cycle 1,2,3 within the month-window groups
  CHECK(t[20].window_k == 1);
  CHECK(t[21].window_k == 2);
  CHECK(t[22].window_k == 3);
  CHECK(t[23].window_k == 1);
}

TEST_CASE("ground_truth equals exhaustive enumeration and excludes distractors") {
  Gallery g = tiny_gallery();
  Interval tl = g.timeline();
  int64_t lo = key_to_ordinal(tl.start, g.manifest);
  int64_t hi = key_to_ordinal(tl.end, g.manifest);
  for (int64_t s = lo; s <= hi; ++s) {
    for (int64_t e = s; e <= hi; ++e) {
      Interval iv{ordinal_to_key(s, g.manifest), ordinal_to_key(e, g.manifest)};
      std::vector<std::string> oracle;
      for (const Record& r : g.records) {
        if (r.rtype == RecordType::neg_comment) continue;
        int64_t o = key_to_ordinal(r.key, g.manifest);
        if (o >= s && o <= e) oracle.push_back(r.id);
      }
      std::sort(oracle.begin(), oracle.end());
      CHECK(ground_truth(iv, g) == oracle);
    }
  }
}

TEST_CASE("instantiation covers anchors, clips windows and sets metadata") {
  Gallery g = tiny_gallery();
  auto res = instantiate_queries(g, default_templates(), {});

  std::set<std::string> seen;
  for (const Query& q : res.queries) {
    CHECK(seen.insert(q.id).second);  // unique ids
    CHECK(!q.gt_ids.empty());
    // ground truth is bidirectional: every listed id overlaps the interval
    for (const std::string& id : q.gt_ids) {
      const Record* r = g.find(id);
      REQUIRE(r != nullptr);
      CHECK(interval_overlap(q.interval, {r->key, r->key}, g.manifest));
      CHECK(r->rtype != RecordType::neg_comment);
    }
    // family follows the group layout
    if (q.template_id <= 12) CHECK(q.family == QueryFamily::P);
    else if (q.template_id <= 20) CHECK(q.family == QueryFamily::G);
    else CHECK(q.family == QueryFamily::W);
    CHECK(q.span_months ==
          key_to_ordinal(q.interval.end, g.manifest) -
              key_to_ordinal(q.interval.start, g.manifest) + 1);
  }

  // Anchor at the timeline start: past windows are fully clipped away.
  for (const Query& q : res.queries) {
    int64_t lo = key_to_ordinal(g.timeline().start, g.manifest);
    CHECK(key_to_ordinal(q.interval.start, g.manifest) >= lo);
  }
  CHECK(res.skipped_out_of_timeline > 0);
}

TEST_CASE("pure no-event flag and template subsetting") {
  Gallery g = tiny_gallery();
  QueryGenConfig cfg;
  cfg.enabled_templates = {13};  // single existence template, point queries
  auto res = instantiate_queries(g, default_templates(), cfg);
  bool saw_pure = false, saw_mixed = false;
  for (const Query& q : res.queries) {
    CHECK(q.template_id == 13);
    bool all_ne = true;
    for (const std::string& id : q.gt_ids)
      if (g.find(id)->rtype != RecordType::no_event) all_ne = false;
    CHECK(q.is_pure_no_event == all_ne);
    saw_pure |= all_ne;
    saw_mixed |= !all_ne;
  }
  CHECK(saw_pure);
  CHECK(saw_mixed);
}

TEST_CASE("year windows skip across reign edges unless enabled") {
  Gallery g = tiny_gallery();
  QueryGenConfig cfg;
  cfg.enabled_templates = {47};  // previous-year window
  auto res = instantiate_queries(g, default_templates(), cfg);
  for (const Query& q : res.queries) {
    // anchor year 1 queries were skipped, so every interval stays in-reign
    CHECK(q.interval.start.gong == q.interval.end.gong);
  }
}

TEST_CASE("query jsonl round trip") {
  Gallery g = tiny_gallery();
  auto res = instantiate_queries(g, default_templates(), {});
  std::string path = (std::filesystem::temp_directory_path() / "ck_queries.jsonl").string();
  save_queries(res.queries, path);
  auto back = load_queries(path);
  REQUIRE(back.size() == res.queries.size());
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == res.queries[i].id);
    CHECK(back[i].text == res.queries[i].text);
    CHECK(back[i].interval.start == res.queries[i].interval.start);
    CHECK(back[i].interval.end == res.queries[i].interval.end);
    CHECK(back[i].family == res.queries[i].family);
    CHECK(back[i].gt_ids == res.queries[i].gt_ids);
    CHECK(back[i].is_pure_no_event == res.queries[i].is_pure_no_event);
  }
  std::filesystem::remove(path);
}

TEST_CASE("template json round trip") {
  std::string path = (std::filesystem::temp_directory_path() / "ck_templates.json").string();
  auto t = default_templates();
  save_templates(t, path);
  auto back = load_templates(path);
  REQUIRE(back.size() == t.size());
  for (size_t i = 0; i < t.size(); ++i) {
    CHECK(back[i].template_id == t[i].template_id);
    CHECK(back[i].group == t[i].group);
    CHECK(back[i].pattern == t[i].pattern);
    CHECK(back[i].window_k == t[i].window_k);
  }
  std::filesystem::remove(path);
}
