#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "chronokey/calendar.hpp"

namespace chronokey {

enum class RecordType { event, no_event, neg_comment };
enum class Split { train, validation, test };

const char* to_string(RecordType t);
const char* to_string(Split s);
RecordType record_type_from_string(const std::string& s);
Split split_from_string(const std::string& s);

/// Atomic retrieval unit keyed by one calendar month.
struct Record {
  std::string id;
  std::string text;
  TimeKey key;
  RecordType rtype = RecordType::event;
  std::string source;
  Split split = Split::train;
};

/// Fixed retrieval gallery over a manifest. Immutable once built; the
/// by_key index maps month ordinals to record positions.
struct Gallery {
  CalendarManifest manifest;
  std::vector<Record> records;
  std::unordered_map<int64_t, std::vector<size_t>> by_key;

  void rebuild_index();
  const Record* find(const std::string& id) const;

  /// Smallest interval covering every record's month. Throws on empty.
  Interval timeline() const;

  /// Canonical JSONL, one record per line, fixed field order.
  void save(const std::string& path) const;
  std::string to_jsonl() const;
};

/// Loads and validates a gallery JSONL against the manifest. Pads the
/// manifest's G/Y/M up to the observed maxima.
Gallery load_gallery(const std::string& path, CalendarManifest manifest);

/// Adds exactly one standardized no_event record for every month in the
/// timeline that has no event record. Months already covered are untouched;
/// a month holding both event and no_event records is a consistency error.
void synthesize_no_event(Gallery& gallery, const Interval& timeline);

/// Allocates disjoint contiguous train/validation/test month blocks within
/// each reign (block order shuffled per reign under the seed) and labels
/// every record with its month's split. Returns per-reign fallback warnings.
std::vector<std::string> assign_splits(Gallery& gallery, double train_ratio, double val_ratio,
                                       double test_ratio, uint64_t seed);

struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<std::string> warnings;
  // split -> rtype -> count
  std::map<std::string, std::map<std::string, int64_t>> counts;

  bool clean() const { return violations.empty(); }
  std::string to_json() const;
};

ValidationReport validate_gallery(const Gallery& gallery);

}  // namespace chronokey
