#include "chronokey/calendar.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "chronokey/rng.hpp"
#include "chronokey/utf8.hpp"

namespace chronokey {

using ordered_json = nlohmann::ordered_json;

void CalendarManifest::validate() const {
  if (gongs.empty()) throw Error("manifest: gongs list is empty");
  std::set<std::string> seen;
  for (const auto& g : gongs) {
    if (!seen.insert(g).second) throw Error("manifest: duplicate gong '" + g + "'");
  }
  if (G < static_cast<int>(gongs.size()))
    throw Error("manifest: G < |gongs| (" + std::to_string(G) + " < " +
                std::to_string(gongs.size()) + ")");
  if (Y < 1) throw Error("manifest: Y must be >= 1");
  if (M < 12) throw Error("manifest: M must be >= 12");
  if (span() < 2) throw Error("manifest: G*Y*M must be >= 2");
}

std::string CalendarManifest::to_json() const {
  ordered_json j;
  j["gongs"] = gongs;
  j["G"] = G;
  j["Y"] = Y;
  j["M"] = M;
  ordered_json lex;
  lex["accession"] = lexicon.accession;
  lex["year_suffix"] = lexicon.year_suffix;
  lex["month_suffix"] = lexicon.month_suffix;
  lex["first_month"] = lexicon.first_month;
  lex["intercalary"] = lexicon.intercalary;
  lex["season_prefixes"] = lexicon.season_prefixes;
  lex["rulers"] = lexicon.rulers;
  j["lexicon"] = lex;
  return j.dump(2) + "\n";
}

CalendarManifest CalendarManifest::from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw FormatError(std::string("manifest: invalid JSON: ") + e.what());
  }
  CalendarManifest m;
  m.gongs = j.at("gongs").get<std::vector<std::string>>();
  m.G = j.at("G").get<int>();
  m.Y = j.at("Y").get<int>();
  m.M = j.at("M").get<int>();
  if (j.contains("lexicon")) {
    const auto& lex = j["lexicon"];
    auto get = [&](const char* k, std::string& dst) {
      if (lex.contains(k)) dst = lex[k].get<std::string>();
    };
    get("accession", m.lexicon.accession);
    get("year_suffix", m.lexicon.year_suffix);
    get("month_suffix", m.lexicon.month_suffix);
    get("first_month", m.lexicon.first_month);
    get("intercalary", m.lexicon.intercalary);
    get("season_prefixes", m.lexicon.season_prefixes);
    if (lex.contains("rulers")) m.lexicon.rulers = lex["rulers"].get<std::vector<std::string>>();
  }
  m.validate();
  return m;
}

void CalendarManifest::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("manifest: cannot write " + path);
  f << to_json();
}

CalendarManifest CalendarManifest::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("manifest: cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json(ss.str());
}

uint64_t CalendarManifest::hash() const {
  std::string j = to_json();
  return fnv1a64(j.data(), j.size());
}

int64_t key_to_ordinal(const TimeKey& key, const CalendarManifest& manifest) {
  if (key.gong < 0 || key.gong >= static_cast<int>(manifest.gongs.size()))
    throw BoundsError("gong index " + std::to_string(key.gong) + " out of range [0, " +
                      std::to_string(manifest.gongs.size()) + ")");
  if (key.year < 1 || key.year > manifest.Y)
    throw BoundsError("year " + std::to_string(key.year) + " out of range [1, " +
                      std::to_string(manifest.Y) + "]");
  if (key.month < 1 || key.month > manifest.M)
    throw BoundsError("month " + std::to_string(key.month) + " out of range [1, " +
                      std::to_string(manifest.M) + "]");
  return int64_t(key.gong) * manifest.Y * manifest.M + int64_t(key.year - 1) * manifest.M +
         (key.month - 1);
}

TimeKey ordinal_to_key(int64_t ordinal, const CalendarManifest& manifest) {
  if (ordinal < 0 || ordinal >= manifest.span())
    throw BoundsError("ordinal " + std::to_string(ordinal) + " out of range [0, " +
                      std::to_string(manifest.span()) + ")");
  TimeKey k;
  k.gong = static_cast<int>(ordinal / (int64_t(manifest.Y) * manifest.M));
  int64_t rem = ordinal % (int64_t(manifest.Y) * manifest.M);
  k.year = static_cast<int>(rem / manifest.M) + 1;
  k.month = static_cast<int>(rem % manifest.M) + 1;
  return k;
}

double linearize_soft(double g, double y, double m, const CalendarManifest& manifest) {
  if (!(g >= 0.0 && g <= manifest.G - 1))
    throw BoundsError("soft gong coordinate out of [0, G-1]");
  if (!(y >= 0.0 && y <= manifest.Y - 1))
    throw BoundsError("soft year coordinate out of [0, Y-1]");
  if (!(m >= 0.0 && m <= manifest.M - 1))
    throw BoundsError("soft month coordinate out of [0, M-1]");
  double num = g * (double(manifest.Y) * manifest.M) + y * manifest.M + m;
  return num / (double(manifest.span()) - 1.0);
}

bool interval_overlap(const Interval& q, const Interval& i, const CalendarManifest& manifest) {
  int64_t qs = key_to_ordinal(q.start, manifest);
  int64_t qe = key_to_ordinal(q.end, manifest);
  int64_t is = key_to_ordinal(i.start, manifest);
  int64_t ie = key_to_ordinal(i.end, manifest);
  if (qs > qe || is > ie) throw Error("interval with start after end");
  return qs <= ie && is <= qe;
}

namespace {

int cn_digit(char32_t c) {
  switch (c) {
    case U'一': return 1;
    case U'二': return 2;
    case U'三': return 3;
    case U'四': return 4;
    case U'五': return 5;
    case U'六': return 6;
    case U'七': return 7;
    case U'八': return 8;
    case U'九': return 9;
    default: return -1;
  }
}

}  // namespace

int parse_cn_number(const std::u32string& s) {
  if (s.empty()) return -1;
  if (s == U"元") return 1;
  size_t i = 0;
  int tens = 0;
  if (s[i] == U'廿') {
    tens = 2;
    ++i;
  } else if (s[i] == U'卅') {
    tens = 3;
    ++i;
  } else {
    int d = cn_digit(s[i]);
    if (d > 0 && i + 1 < s.size() && s[i + 1] == U'十') {
      tens = d;
      i += 2;
    } else if (s[i] == U'十') {
      tens = 1;
      ++i;
    }
  }
  if (i == s.size()) return tens > 0 ? tens * 10 : -1;
  int d = cn_digit(s[i]);
  if (d < 0 || i + 1 != s.size()) return -1;
  if (tens == 0 && s.size() == 1) return d;
  if (tens == 0) return -1;
  return tens * 10 + d;
}

std::string render_cn_number(int n) {
  if (n < 1 || n > 99) throw Error("cn numeral out of range [1,99]: " + std::to_string(n));
  static const char* digits[] = {"", "一", "二", "三", "四", "五", "六", "七", "八", "九"};
  std::string out;
  if (n >= 20)
    out = std::string(digits[n / 10]) + "十";
  else if (n >= 10)
    out = "十";
  if (n % 10 != 0) out += digits[n % 10];
  return out;
}

std::string render_key(const TimeKey& key, const CalendarManifest& manifest) {
  key_to_ordinal(key, manifest);  // bounds check
  const Lexicon& lex = manifest.lexicon;
  std::string out = manifest.gongs[key.gong];
  out += (key.year == 1) ? "元" : render_cn_number(key.year);
  out += lex.year_suffix;
  if (key.month == 13)
    out += lex.intercalary;
  else if (key.month == 1)
    out += lex.first_month;
  else
    out += render_cn_number(key.month);
  out += lex.month_suffix;
  return out;
}

namespace {

struct LineCues {
  int ruler = -1;          // manifest gong index named in the line
  bool unknown_ruler = false;
  bool accession = false;
  int year = -1;
  int month = -1;
};

// Clause-level cue extraction: a clause is a year cue iff (after stripping
// season/王 prefixes) it is exactly <numeral>年, and a month cue iff exactly
// [闰](正|<numeral>)月. Event prose never matches whole clauses, which keeps
// the matcher robust to incidental 年/月 characters.
LineCues extract_cues(const std::string& line, const CalendarManifest& manifest) {
  const Lexicon& lex = manifest.lexicon;
  LineCues cues;

  for (size_t gi = 0; gi < manifest.gongs.size(); ++gi) {
    if (!manifest.gongs[gi].empty() && line.find(manifest.gongs[gi]) != std::string::npos) {
      cues.ruler = static_cast<int>(gi);
      break;
    }
  }
  if (cues.ruler < 0) {
    for (const auto& name : lex.rulers) {
      if (!name.empty() && line.find(name) != std::string::npos) {
        bool in_manifest = false;
        for (size_t gi = 0; gi < manifest.gongs.size(); ++gi) {
          if (manifest.gongs[gi] == name) {
            cues.ruler = static_cast<int>(gi);
            in_manifest = true;
            break;
          }
        }
        if (!in_manifest) cues.unknown_ruler = true;
        break;
      }
    }
  }
  if (line.find(lex.accession) != std::string::npos) cues.accession = true;

  std::u32string u = utf8_decode(line);
  std::u32string seasons = utf8_decode(lex.season_prefixes);
  char32_t year_suffix = utf8_decode(lex.year_suffix)[0];
  char32_t month_suffix = utf8_decode(lex.month_suffix)[0];
  char32_t first_month = utf8_decode(lex.first_month)[0];
  char32_t intercalary = utf8_decode(lex.intercalary)[0];

  static const std::u32string kSeparators = U"，。、；：！？,.;:!? ";
  std::vector<std::u32string> clauses;
  std::u32string cur;
  for (char32_t c : u) {
    if (kSeparators.find(c) != std::u32string::npos) {
      if (!cur.empty()) clauses.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) clauses.push_back(cur);

  for (auto clause : clauses) {
    size_t start = 0;
    while (start < clause.size() && seasons.find(clause[start]) != std::u32string::npos) ++start;
    clause = clause.substr(start);
    if (clause.size() < 2) continue;
    char32_t last = clause.back();
    std::u32string body = clause.substr(0, clause.size() - 1);
    if (last == year_suffix && cues.year < 0) {
      int n = parse_cn_number(body);
      if (n > 0) {
        cues.year = n;
      } else {
        // Full reign formula fused into one clause: <ruler><numeral>年.
        auto try_ruler_year = [&](const std::string& name) {
          std::u32string uname = utf8_decode(name);
          if (uname.empty() || body.size() <= uname.size()) return false;
          if (body.compare(0, uname.size(), uname) != 0) return false;
          int yr = parse_cn_number(body.substr(uname.size()));
          if (yr <= 0) return false;
          cues.year = yr;
          return true;
        };
        for (size_t gi = 0; gi < manifest.gongs.size() && cues.year < 0; ++gi)
          if (try_ruler_year(manifest.gongs[gi])) cues.ruler = static_cast<int>(gi);
        for (size_t ri = 0; ri < lex.rulers.size() && cues.year < 0; ++ri)
          if (try_ruler_year(lex.rulers[ri]) && cues.ruler < 0) cues.unknown_ruler = true;
      }
    } else if (last == month_suffix && cues.month < 0) {
      if (!body.empty() && body[0] == intercalary) {
        cues.month = 13;  // intercalary slot
      } else if (body.size() == 1 && body[0] == first_month) {
        cues.month = 1;
      } else {
        int n = parse_cn_number(body);
        if (n >= 1 && n <= 12) cues.month = n;
      }
    }
  }
  return cues;
}

}  // namespace

std::vector<ScannedLine> scan_annal_stream(const std::vector<std::string>& lines,
                                           const CalendarManifest& manifest,
                                           std::optional<TimeKey> seed) {
  manifest.validate();
  ScannerState st;
  if (seed) {
    key_to_ordinal(*seed, manifest);
    st.gong = seed->gong;
    st.year = seed->year;
    st.month = seed->month;
  }

  std::vector<ScannedLine> out;
  out.reserve(lines.size());
  for (size_t li = 0; li < lines.size(); ++li) {
    const std::string& line = lines[li];
    LineCues cues = extract_cues(line, manifest);
    if (cues.unknown_ruler)
      throw Error("line " + std::to_string(li + 1) + ": ruler not in manifest");

    // Most specific rule wins: full formula > accession > year > month.
    if (cues.ruler >= 0 && cues.year > 0) {
      st.gong = cues.ruler;
      st.year = cues.year;
      st.month = cues.month > 0 ? cues.month : 1;
    } else if (cues.accession) {
      st.gong = st.anchored() ? st.gong + 1 : 0;
      if (st.gong >= static_cast<int>(manifest.gongs.size()))
        throw Error("line " + std::to_string(li + 1) +
                    ": accession past the last gong in the manifest");
      st.year = cues.year > 0 ? cues.year : 1;
      st.month = cues.month > 0 ? cues.month : 1;
    } else if (cues.year > 0) {
      if (!st.anchored()) {
        if (cues.year != 1)
          throw Error("line " + std::to_string(li + 1) + ": unanchored stream (year cue " +
                      std::to_string(cues.year) + " before any reign established)");
        st.gong = 0;  // stream start with a first-year formula anchors gong 0
      }
      st.year = cues.year;
      st.month = cues.month > 0 ? cues.month : 1;
    } else if (cues.month > 0) {
      if (!st.anchored())
        throw Error("line " + std::to_string(li + 1) +
                    ": unanchored stream (month cue before any reign established)");
      st.month = cues.month;
    } else if (!st.anchored()) {
      throw Error("line " + std::to_string(li + 1) +
                  ": unanchored stream (no cue and no seed key)");
    }

    TimeKey key{st.gong, st.year, st.month};
    key_to_ordinal(key, manifest);  // validate against the padded index space
    out.push_back({line, key});
  }
  return out;
}

}  // namespace chronokey
