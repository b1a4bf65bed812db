#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chronokey/corpus.hpp"

namespace chronokey {

enum class TemplateGroup {
  BASE_CONTENT,    // ids 1-12, point, content-oriented
  BASE_EXISTENCE,  // ids 13-20, point, existence / no-event
  MONTH_PAST,      // ids 21-26, window, past
  MONTH_FUTURE,    // ids 27-31, window, future
  MONTH_AROUND,    // ids 32-36, window, around
  MONTH_RANGE,     // ids 37-41, window, range
  YEAR_CURRENT,    // ids 42-46, window, current year
  YEAR_PAST,       // ids 47-49, window, previous year
  YEAR_FUTURE,     // ids 50-52, window, next year
};

enum class QueryFamily { P, G, W };

const char* to_string(TemplateGroup g);
const char* to_string(QueryFamily f);
QueryFamily family_from_string(const std::string& s);

struct QueryTemplate {
  int template_id = 0;
  TemplateGroup group = TemplateGroup::BASE_CONTENT;
  std::string pattern;  // placeholders: {key}, {key2}, {span}
  int window_k = 0;     // window size in months, where applicable
};

/// The 52 built-in templates. Group/id layout is fixed; the phrasings are
/// neutral stand-ins with the group's temporal semantics.
std::vector<QueryTemplate> default_templates();
std::vector<QueryTemplate> load_templates(const std::string& path);
void save_templates(const std::vector<QueryTemplate>& templates, const std::string& path);

struct Query {
  std::string id;
  std::string text;
  Interval interval;
  QueryFamily family = QueryFamily::P;
  int template_id = 0;
  int span_months = 1;
  bool is_pure_no_event = false;
  Split split = Split::train;
  std::vector<std::string> gt_ids;
};

struct QueryGenConfig {
  std::vector<int> enabled_templates;  // empty = all
  bool cross_reign_year = false;       // YEAR_PAST/FUTURE across reigns
};

struct QueryGenResult {
  std::vector<Query> queries;
  int64_t skipped_out_of_timeline = 0;
  int64_t skipped_empty_ground_truth = 0;
};

/// Instantiates one query per (anchor month, enabled template). Output is in
/// canonical order (anchor ordinal, then template id); splits inherit from
/// the anchor month. Ground truth is the exhaustive interval-overlap set of
/// event and no_event records.
QueryGenResult instantiate_queries(const Gallery& gallery,
                                   const std::vector<QueryTemplate>& templates,
                                   const QueryGenConfig& config);

/// All event/no_event record ids whose key overlaps the interval.
std::vector<std::string> ground_truth(const Interval& interval, const Gallery& gallery);

void save_queries(const std::vector<Query>& queries, const std::string& path);
std::vector<Query> load_queries(const std::string& path);

}  // namespace chronokey
