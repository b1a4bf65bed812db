#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chronokey/errors.hpp"

namespace chronokey {

/// Cue markers used by the annal scanner. Configurable so the scanner stays
/// corpus-agnostic; defaults cover the Chunqiu conventions.
struct Lexicon {
  std::string accession = "即位";        // 即位
  std::string year_suffix = "年";            // 年
  std::string month_suffix = "月";           // 月
  std::string first_month = "正";            // 正 (first month)
  std::string intercalary = "闰";            // 闰 (intercalary month)
  std::string season_prefixes = "春夏秋冬王";  // 春夏秋冬王
  // Ruler names recognized beyond the manifest's gong list; a hit that is
  // not in the manifest raises an unknown-gong error.
  std::vector<std::string> rulers;
};

/// The fixed (padded) index space of a reign-based calendar: G gongs x
/// Y regnal years x M months. All downstream math reads G/Y/M from here.
struct CalendarManifest {
  std::vector<std::string> gongs;  // chronological reign identifiers
  int G = 0;                       // padded gong count, >= |gongs|
  int Y = 0;                       // padded max regnal years per gong
  int M = 13;                      // months per year; slot 13 is intercalary
  Lexicon lexicon;

  int64_t span() const { return int64_t(G) * Y * M; }

  /// Throws Error if the invariants do not hold.
  void validate() const;

  std::string to_json() const;
  static CalendarManifest from_json(const std::string& text);
  void save(const std::string& path) const;
  static CalendarManifest load(const std::string& path);

  /// Hash of the canonical JSON form; used to bind checkpoints to a manifest.
  uint64_t hash() const;
};

/// One calendar month: gong index (0-based), regnal year and month (1-based).
struct TimeKey {
  int gong = 0;
  int year = 1;
  int month = 1;
  auto operator<=>(const TimeKey&) const = default;
};

/// Closed month range [start, end] on the linearized calendar.
struct Interval {
  TimeKey start;
  TimeKey end;
};

/// Bijective linearization: gong*(Y*M) + (year-1)*M + (month-1).
int64_t key_to_ordinal(const TimeKey& key, const CalendarManifest& manifest);
TimeKey ordinal_to_key(int64_t ordinal, const CalendarManifest& manifest);

/// Latent calendar scalar for soft 0-based coordinates:
/// u = (g*(Y*M) + y*M + m) / (G*Y*M - 1), in [0,1].
double linearize_soft(double g, double y, double m, const CalendarManifest& manifest);

bool interval_overlap(const Interval& q, const Interval& i, const CalendarManifest& manifest);

/// Chinese numeral helpers (1..99). parse returns -1 when the text is not a
/// numeral; 元 parses as 1.
int parse_cn_number(const std::u32string& s);
std::string render_cn_number(int n);

/// Traditional key phrase, e.g. 鲁隐公元年正月 (year 1 -> 元年, month 1 ->
/// 正月, month M=13 -> 闰月) with the manifest's gong identifier as prefix.
std::string render_key(const TimeKey& key, const CalendarManifest& manifest);

/// Mutable scanner state: the current (gong, year, month) triple.
struct ScannerState {
  int gong = -1;
  int year = -1;
  int month = -1;
  bool anchored() const { return gong >= 0; }
};

struct ScannedLine {
  std::string line;
  TimeKey key;
};

/// Normalizes raw annal lines into time keys by applying cue rules in order
/// of specificity: full reign formula > accession > bare year > bare month >
/// inherit. Deterministic and prefix-stable.
std::vector<ScannedLine> scan_annal_stream(const std::vector<std::string>& lines,
                                           const CalendarManifest& manifest,
                                           std::optional<TimeKey> seed = std::nullopt);

}  // namespace chronokey
