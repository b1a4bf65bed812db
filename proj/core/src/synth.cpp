#include "chronokey/synth.hpp"

#include <algorithm>

#include "chronokey/rng.hpp"
#include "chronokey/utf8.hpp"
#include "json.hpp"

namespace chronokey {

namespace {

// 64 distinct single characters used to mint unique two-character place
// markers (64^2 = 4096 possible markers).
const char* kMarkerChars =
    "郑宋卫陈蔡齐鲁晋楚秦吴越燕韩赵魏邾莒杞滕薛郯徐舒庸厉项谷邓息随唐顿胡沈江黄罗权申吕虞虢"
    "焦滑霍杨温原樊密郕郜邘应蒋邢茅胙祭戴芮毕酆";

const char* kEventActs[] = {
    "公会诸侯盟于", "公及大夫会于", "公伐戎于",   "公筑台于", "大阅兵车于",
    "公观鱼于",     "公狩于",       "诸侯来朝于", "公锡命于", "会王使于",
};

const char* kEventTails[] = {
    "修好而去", "既盟而归", "礼成乃还", "告捷于庙", "众皆悦服",
    "有年大熟", "乃献其功", "受玉而退",
};

const char* kCommentTails[] = {
    "非礼也", "其礼废矣", "盖有惧焉", "讥之也", "善之也", "志异也",
};

std::string marker_for(int64_t ordinal) {
  static const std::u32string chars = utf8_decode(kMarkerChars);
  static const bool distinct = [] {
    std::u32string s = chars;
    std::sort(s.begin(), s.end());
    return std::adjacent_find(s.begin(), s.end()) == s.end();
  }();
  if (chars.size() < 64 || !distinct) throw Error("synth: marker alphabet must be 64 distinct chars");
  std::u32string m;
  m.push_back(chars[static_cast<size_t>((ordinal / 64) % 64)]);
  m.push_back(chars[static_cast<size_t>(ordinal % 64)]);
  return utf8_encode(m);
}

}  // namespace

SynthResult generate_corpus(const SynthSpec& spec) {
  if (spec.gongs.empty()) throw Error("synth: need at least one gong");
  if (spec.Y < 1 || spec.M < 1) throw Error("synth: Y and M must be positive");
  if (spec.event_rate < 0.0 || spec.event_rate > 1.0 || spec.distractor_rate < 0.0 ||
      spec.distractor_rate > 1.0)
    throw Error("synth: rates must lie in [0, 1]");

  SynthResult res;
  Gallery& g = res.gallery;
  g.manifest.gongs = spec.gongs;
  g.manifest.G = static_cast<int>(spec.gongs.size());
  g.manifest.Y = spec.Y;
  g.manifest.M = std::max(spec.M + 1, 13);  // keep the intercalary slot padded
  g.manifest.validate();

  Rng rng(mix64(spec.seed ^ 0x5E17A11ULL));

  struct MonthTruth {
    int64_t ordinal;
    TimeKey key;
    std::vector<std::string> events;
    std::vector<std::string> distractors;
  };
  std::vector<MonthTruth> truth;
  std::vector<int> has_event;  // indexed by natural-month position

  // Natural months only: gong x year x month 1..spec.M, in calendar order.
  std::vector<TimeKey> months;
  for (int gi = 0; gi < g.manifest.G; ++gi)
    for (int y = 1; y <= spec.Y; ++y)
      for (int m = 1; m <= spec.M; ++m) months.push_back({gi, y, m});

  truth.reserve(months.size());
  has_event.assign(months.size(), 0);
  for (size_t i = 0; i < months.size(); ++i) {
    truth.push_back({key_to_ordinal(months[i], g.manifest), months[i], {}, {}});
    has_event[i] = rng.uniform() < spec.event_rate ? 1 : 0;
  }

  size_t n_acts = sizeof(kEventActs) / sizeof(kEventActs[0]);
  size_t n_tails = sizeof(kEventTails) / sizeof(kEventTails[0]);
  size_t n_comments = sizeof(kCommentTails) / sizeof(kCommentTails[0]);

  for (size_t i = 0; i < months.size(); ++i) {
    if (!has_event[i]) continue;
    const TimeKey& key = months[i];
    int64_t o = truth[i].ordinal;
    std::string marker = marker_for(o);
    std::string act = kEventActs[rng.bounded(n_acts)];
    std::string tail = kEventTails[rng.bounded(n_tails)];

    Record ev;
    ev.id = "ev" + std::to_string(o);
    ev.text = render_key(key, g.manifest) + "，" + act + marker + "，" + tail + "。";
    ev.key = key;
    ev.rtype = RecordType::event;
    ev.source = "synth";
    g.records.push_back(ev);
    truth[i].events.push_back(ev.id);

    if (rng.uniform() < spec.distractor_rate) {
      // Place the commentary one natural month away; flip direction at the
      // timeline edges.
      int dir = rng.bounded(2) ? 1 : -1;
      size_t j;
      if ((dir < 0 && i == 0) || (dir > 0 && i + 1 == months.size())) dir = -dir;
      j = static_cast<size_t>(static_cast<int64_t>(i) + dir);
      Record ng;
      int64_t o2 = truth[j].ordinal;
      ng.id = "ng" + std::to_string(o2) + "_" + std::to_string(o);
      ng.text = "君子论曰：昔" + render_key(key, g.manifest) + act + marker + "，" +
                kCommentTails[rng.bounded(n_comments)] + "。";
      ng.key = months[j];
      ng.rtype = RecordType::neg_comment;
      ng.source = "synth";
      g.records.push_back(ng);
      truth[j].distractors.push_back(ng.id);
    }
  }
  g.rebuild_index();

  nlohmann::ordered_json ledger;
  ledger["spec"] = {{"G", g.manifest.G},
                    {"Y", spec.Y},
                    {"M", spec.M},
                    {"event_rate", spec.event_rate},
                    {"distractor_rate", spec.distractor_rate},
                    {"seed", spec.seed}};
  nlohmann::ordered_json jm = nlohmann::ordered_json::array();
  for (const MonthTruth& t : truth) {
    jm.push_back({{"ordinal", t.ordinal},
                  {"gong", t.key.gong},
                  {"year", t.key.year},
                  {"month", t.key.month},
                  {"events", t.events},
                  {"distractors", t.distractors}});
  }
  ledger["months"] = jm;
  res.ledger_json = ledger.dump(2);
  return res;
}

}  // namespace chronokey
