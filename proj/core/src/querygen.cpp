#include "chronokey/querygen.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace chronokey {

using ordered_json = nlohmann::ordered_json;

const char* to_string(TemplateGroup g) {
  switch (g) {
    case TemplateGroup::BASE_CONTENT: return "BASE_CONTENT";
    case TemplateGroup::BASE_EXISTENCE: return "BASE_EXISTENCE";
    case TemplateGroup::MONTH_PAST: return "MONTH_PAST";
    case TemplateGroup::MONTH_FUTURE: return "MONTH_FUTURE";
    case TemplateGroup::MONTH_AROUND: return "MONTH_AROUND";
    case TemplateGroup::MONTH_RANGE: return "MONTH_RANGE";
    case TemplateGroup::YEAR_CURRENT: return "YEAR_CURRENT";
    case TemplateGroup::YEAR_PAST: return "YEAR_PAST";
    case TemplateGroup::YEAR_FUTURE: return "YEAR_FUTURE";
  }
  return "?";
}

const char* to_string(QueryFamily f) {
  switch (f) {
    case QueryFamily::P: return "P";
    case QueryFamily::G: return "G";
    case QueryFamily::W: return "W";
  }
  return "?";
}

QueryFamily family_from_string(const std::string& s) {
  if (s == "P") return QueryFamily::P;
  if (s == "G") return QueryFamily::G;
  if (s == "W") return QueryFamily::W;
  throw FormatError("unknown query family '" + s + "'");
}

namespace {

TemplateGroup group_from_string(const std::string& s) {
  for (TemplateGroup g :
       {TemplateGroup::BASE_CONTENT, TemplateGroup::BASE_EXISTENCE, TemplateGroup::MONTH_PAST,
        TemplateGroup::MONTH_FUTURE, TemplateGroup::MONTH_AROUND, TemplateGroup::MONTH_RANGE,
        TemplateGroup::YEAR_CURRENT, TemplateGroup::YEAR_PAST, TemplateGroup::YEAR_FUTURE}) {
    if (s == to_string(g)) return g;
  }
  throw FormatError("unknown template group '" + s + "'");
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

}  // namespace

std::vector<QueryTemplate> default_templates() {
  std::vector<QueryTemplate> t;
  auto add = [&](int id, TemplateGroup g, const char* pattern, int k = 0) {
    t.push_back({id, g, pattern, k});
  };
  // Point, content-oriented (1-12).
  add(1, TemplateGroup::BASE_CONTENT, "{key}有何事？");
  add(2, TemplateGroup::BASE_CONTENT, "{key}发生了什么？");
  add(3, TemplateGroup::BASE_CONTENT, "{key}记载了哪些事？");
  add(4, TemplateGroup::BASE_CONTENT, "{key}之事为何？");
  add(5, TemplateGroup::BASE_CONTENT, "试述{key}所载之事。");
  add(6, TemplateGroup::BASE_CONTENT, "{key}经传所记何事？");
  add(7, TemplateGroup::BASE_CONTENT, "{key}有哪些大事？");
  add(8, TemplateGroup::BASE_CONTENT, "{key}所书之事有哪些？");
  add(9, TemplateGroup::BASE_CONTENT, "请列出{key}的记载。");
  add(10, TemplateGroup::BASE_CONTENT, "{key}当月发生何事？");
  add(11, TemplateGroup::BASE_CONTENT, "{key}之记事。");
  add(12, TemplateGroup::BASE_CONTENT, "{key}史事几何？");
  // Point, existence / no-event (13-20).
  add(13, TemplateGroup::BASE_EXISTENCE, "{key}是否无事可书？");
  add(14, TemplateGroup::BASE_EXISTENCE, "{key}有无记载？");
  add(15, TemplateGroup::BASE_EXISTENCE, "{key}当月是否空白？");
  add(16, TemplateGroup::BASE_EXISTENCE, "{key}可有事记？");
  add(17, TemplateGroup::BASE_EXISTENCE, "{key}是否为无事之月？");
  add(18, TemplateGroup::BASE_EXISTENCE, "{key}有无大事发生？");
  add(19, TemplateGroup::BASE_EXISTENCE, "{key}之月有无书记？");
  add(20, TemplateGroup::BASE_EXISTENCE, "{key}是否未见记载？");
  // Window, past (21-26), sizes cycle 1,2,3.
  add(21, TemplateGroup::MONTH_PAST, "{key}之前{span}月有何事？", 1);
  add(22, TemplateGroup::MONTH_PAST, "{key}此前{span}月记载了什么？", 2);
  add(23, TemplateGroup::MONTH_PAST, "{key}之前{span}月所书何事？", 3);
  add(24, TemplateGroup::MONTH_PAST, "{key}之前{span}月可有记载？", 1);
  add(25, TemplateGroup::MONTH_PAST, "{key}此前{span}月之事为何？", 2);
  add(26, TemplateGroup::MONTH_PAST, "{key}之前{span}月有哪些记载？", 3);
  // Window, future (27-31).
  add(27, TemplateGroup::MONTH_FUTURE, "{key}之后{span}月有何事？", 1);
  add(28, TemplateGroup::MONTH_FUTURE, "{key}此后{span}月记载了什么？", 2);
  add(29, TemplateGroup::MONTH_FUTURE, "{key}之后{span}月所书何事？", 3);
  add(30, TemplateGroup::MONTH_FUTURE, "{key}之后{span}月可有记载？", 1);
  add(31, TemplateGroup::MONTH_FUTURE, "{key}此后{span}月之事为何？", 2);
  // Window, around (32-36).
  add(32, TemplateGroup::MONTH_AROUND, "{key}前后{span}月有何事？", 1);
  add(33, TemplateGroup::MONTH_AROUND, "{key}前后{span}月记载了什么？", 2);
  add(34, TemplateGroup::MONTH_AROUND, "{key}上下{span}月所书何事？", 3);
  add(35, TemplateGroup::MONTH_AROUND, "{key}前后{span}月可有记载？", 1);
  add(36, TemplateGroup::MONTH_AROUND, "{key}前后{span}月之事为何？", 2);
  // Window, explicit range (37-41).
  add(37, TemplateGroup::MONTH_RANGE, "{key}至{key2}之间有何事？", 1);
  add(38, TemplateGroup::MONTH_RANGE, "自{key}至{key2}记载了什么？", 2);
  add(39, TemplateGroup::MONTH_RANGE, "{key}至{key2}所书何事？", 3);
  add(40, TemplateGroup::MONTH_RANGE, "自{key}至{key2}可有记载？", 1);
  add(41, TemplateGroup::MONTH_RANGE, "{key}至{key2}之间之事为何？", 2);
  // Window, current year (42-46).
  add(42, TemplateGroup::YEAR_CURRENT, "{key}当年有何事？");
  add(43, TemplateGroup::YEAR_CURRENT, "{key}所在之年记载了什么？");
  add(44, TemplateGroup::YEAR_CURRENT, "{key}当年所书何事？");
  add(45, TemplateGroup::YEAR_CURRENT, "{key}其年可有记载？");
  add(46, TemplateGroup::YEAR_CURRENT, "{key}当年之事为何？");
  // Window, previous year (47-49).
  add(47, TemplateGroup::YEAR_PAST, "{key}前一年有何事？");
  add(48, TemplateGroup::YEAR_PAST, "{key}上一年记载了什么？");
  add(49, TemplateGroup::YEAR_PAST, "{key}前一年所书何事？");
  // Window, next year (50-52).
  add(50, TemplateGroup::YEAR_FUTURE, "{key}次年有何事？");
  add(51, TemplateGroup::YEAR_FUTURE, "{key}下一年记载了什么？");
  add(52, TemplateGroup::YEAR_FUTURE, "{key}次年所书何事？");
  return t;
}

void save_templates(const std::vector<QueryTemplate>& templates, const std::string& path) {
  ordered_json arr = ordered_json::array();
  for (const auto& t : templates) {
    ordered_json j;
    j["template_id"] = t.template_id;
    j["group"] = to_string(t.group);
    j["pattern"] = t.pattern;
    j["window_k"] = t.window_k;
    arr.push_back(j);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("templates: cannot write " + path);
  f << arr.dump(2) << "\n";
}

std::vector<QueryTemplate> load_templates(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("templates: cannot read " + path);
  ordered_json arr;
  try {
    f >> arr;
  } catch (const std::exception& e) {
    throw FormatError("templates " + path + ": " + e.what());
  }
  std::vector<QueryTemplate> out;
  for (const auto& j : arr) {
    QueryTemplate t;
    t.template_id = j.at("template_id").get<int>();
    t.group = group_from_string(j.at("group").get<std::string>());
    t.pattern = j.at("pattern").get<std::string>();
    t.window_k = j.value("window_k", 0);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<std::string> ground_truth(const Interval& interval, const Gallery& gallery) {
  int64_t s = key_to_ordinal(interval.start, gallery.manifest);
  int64_t e = key_to_ordinal(interval.end, gallery.manifest);
  if (s > e) throw Error("ground_truth: interval start after end");
  std::vector<std::string> ids;
  for (int64_t o = s; o <= e; ++o) {
    auto it = gallery.by_key.find(o);
    if (it == gallery.by_key.end()) continue;
    for (size_t idx : it->second) {
      const Record& r = gallery.records[idx];
      if (r.rtype == RecordType::neg_comment) continue;  // never ground truth
      ids.push_back(r.id);
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

QueryGenResult instantiate_queries(const Gallery& gallery,
                                   const std::vector<QueryTemplate>& templates,
                                   const QueryGenConfig& config) {
  const CalendarManifest& mf = gallery.manifest;
  Interval tl = gallery.timeline();
  int64_t lo = key_to_ordinal(tl.start, mf);
  int64_t hi = key_to_ordinal(tl.end, mf);
  const int64_t YM = int64_t(mf.Y) * mf.M;

  auto enabled = [&](int id) {
    if (config.enabled_templates.empty()) return true;
    return std::find(config.enabled_templates.begin(), config.enabled_templates.end(), id) !=
           config.enabled_templates.end();
  };

  QueryGenResult result;
  for (int64_t anchor = lo; anchor <= hi; ++anchor) {
    TimeKey akey = ordinal_to_key(anchor, mf);
    for (const QueryTemplate& t : templates) {
      if (!enabled(t.template_id)) continue;

      int64_t s = anchor, e = anchor;
      switch (t.group) {
        case TemplateGroup::BASE_CONTENT:
        case TemplateGroup::BASE_EXISTENCE:
          break;
        case TemplateGroup::MONTH_PAST:
          s = anchor - t.window_k;
          e = anchor - 1;
          break;
        case TemplateGroup::MONTH_FUTURE:
          s = anchor + 1;
          e = anchor + t.window_k;
          break;
        case TemplateGroup::MONTH_AROUND:
          s = anchor - t.window_k;
          e = anchor + t.window_k;
          break;
        case TemplateGroup::MONTH_RANGE:
          s = anchor;
          e = anchor + t.window_k;
          break;
        case TemplateGroup::YEAR_CURRENT: {
          int64_t ys = int64_t(akey.gong) * YM + int64_t(akey.year - 1) * mf.M;
          s = ys;
          e = ys + mf.M - 1;
          break;
        }
        case TemplateGroup::YEAR_PAST: {
          if (akey.year == 1 && !config.cross_reign_year) {
            ++result.skipped_out_of_timeline;
            continue;
          }
          int64_t ys = int64_t(akey.gong) * YM + int64_t(akey.year - 2) * mf.M;
          s = ys;
          e = ys + mf.M - 1;
          break;
        }
        case TemplateGroup::YEAR_FUTURE: {
          if (akey.year == mf.Y && !config.cross_reign_year) {
            ++result.skipped_out_of_timeline;
            continue;
          }
          int64_t ys = int64_t(akey.gong) * YM + int64_t(akey.year) * mf.M;
          s = ys;
          e = ys + mf.M - 1;
          break;
        }
      }

      // Clip to the timeline; windows falling entirely outside are skipped.
      s = std::max(s, lo);
      e = std::min(e, hi);
      if (s > e) {
        ++result.skipped_out_of_timeline;
        continue;
      }

      Query q;
      q.interval = {ordinal_to_key(s, mf), ordinal_to_key(e, mf)};
      q.template_id = t.template_id;
      q.span_months = static_cast<int>(e - s + 1);
      switch (t.group) {
        case TemplateGroup::BASE_CONTENT: q.family = QueryFamily::P; break;
        case TemplateGroup::BASE_EXISTENCE: q.family = QueryFamily::G; break;
        default: q.family = QueryFamily::W; break;
      }

      q.gt_ids = ground_truth(q.interval, gallery);
      if (q.gt_ids.empty()) {
        ++result.skipped_empty_ground_truth;
        continue;
      }
      q.is_pure_no_event = true;
      for (const auto& id : q.gt_ids) {
        const Record* r = gallery.find(id);
        if (r && r->rtype != RecordType::no_event) {
          q.is_pure_no_event = false;
          break;
        }
      }

      std::string text = t.pattern;
      replace_all(text, "{key}", render_key(akey, mf));
      if (text.find("{key2}") != std::string::npos)
        replace_all(text, "{key2}", render_key(q.interval.end, mf));
      if (text.find("{span}") != std::string::npos)
        replace_all(text, "{span}", render_cn_number(t.window_k));
      q.text = std::move(text);
      q.id = "q" + std::to_string(anchor) + "_t" + std::to_string(t.template_id);

      // Split inherited from the anchor month's records.
      auto it = gallery.by_key.find(anchor);
      q.split = (it != gallery.by_key.end() && !it->second.empty())
                    ? gallery.records[it->second.front()].split
                    : Split::train;
      result.queries.push_back(std::move(q));
    }
  }
  return result;
}

void save_queries(const std::vector<Query>& queries, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("queries: cannot write " + path);
  for (const auto& q : queries) {
    ordered_json j;
    j["id"] = q.id;
    j["text"] = q.text;
    j["start"] = {{"gong", q.interval.start.gong},
                  {"year", q.interval.start.year},
                  {"month", q.interval.start.month}};
    j["end"] = {{"gong", q.interval.end.gong},
                {"year", q.interval.end.year},
                {"month", q.interval.end.month}};
    j["family"] = to_string(q.family);
    j["template_id"] = q.template_id;
    j["span_months"] = q.span_months;
    j["is_pure_no_event"] = q.is_pure_no_event;
    j["split"] = to_string(q.split);
    j["gt_ids"] = q.gt_ids;
    f << j.dump() << "\n";
  }
}

std::vector<Query> load_queries(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("queries: cannot read " + path);
  std::vector<Query> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw FormatError("queries line " + std::to_string(lineno) + ": " + e.what());
    }
    Query q;
    q.id = j.at("id").get<std::string>();
    q.text = j.at("text").get<std::string>();
    q.interval.start = {j.at("start").at("gong").get<int>(), j.at("start").at("year").get<int>(),
                        j.at("start").at("month").get<int>()};
    q.interval.end = {j.at("end").at("gong").get<int>(), j.at("end").at("year").get<int>(),
                      j.at("end").at("month").get<int>()};
    q.family = family_from_string(j.at("family").get<std::string>());
    q.template_id = j.at("template_id").get<int>();
    q.span_months = j.at("span_months").get<int>();
    q.is_pure_no_event = j.at("is_pure_no_event").get<bool>();
    q.split = split_from_string(j.at("split").get<std::string>());
    q.gt_ids = j.at("gt_ids").get<std::vector<std::string>>();
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace chronokey
