#include "chronokey/lexical.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "chronokey/utf8.hpp"

namespace chronokey {

namespace {

bool keep_codepoint(char32_t c) {
  if (c < 0x80) return (c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z');
  if (c >= 0x2000 && c <= 0x303F) return false;  // general + CJK punctuation
  if (c >= 0xFF00 && c <= 0xFFEF) return false;  // fullwidth forms
  return true;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::u32string u = utf8_decode(text);
  std::u32string norm;
  norm.reserve(u.size());
  for (char32_t c : u)
    if (keep_codepoint(c)) norm.push_back(c);

  std::vector<std::string> tokens;
  tokens.reserve(norm.size() * 2);
  for (size_t i = 0; i < norm.size(); ++i) tokens.push_back(utf8_encode(norm.substr(i, 1)));
  for (size_t i = 0; i + 1 < norm.size(); ++i) tokens.push_back(utf8_encode(norm.substr(i, 2)));
  return tokens;
}

InvertedIndex build_index(const Gallery& gallery) {
  InvertedIndex idx;
  idx.N = static_cast<uint32_t>(gallery.records.size());
  idx.doc_ids.reserve(idx.N);
  uint64_t total_len = 0;
  for (uint32_t d = 0; d < idx.N; ++d) {
    const Record& r = gallery.records[d];
    idx.doc_ids.push_back(r.id);
    idx.doc_month.push_back(key_to_ordinal(r.key, gallery.manifest));
    std::vector<std::string> toks = tokenize(r.text);
    idx.doc_len.push_back(static_cast<uint32_t>(toks.size()));
    total_len += toks.size();
    std::map<std::string, uint32_t> tf;
    for (auto& t : toks) tf[t] += 1;
    for (auto& [term, f] : tf) idx.postings[term].push_back({d, f});
  }
  idx.avgdl = idx.N ? static_cast<double>(total_len) / idx.N : 0.0;
  return idx;
}

std::vector<ScoredDoc> bm25_search(const InvertedIndex& index, const std::string& query_text,
                                   double k1, double b, size_t topN) {
  if (k1 <= 0.0 || b < 0.0 || b > 1.0) throw Error("bm25: k1 > 0 and 0 <= b <= 1 required");
  std::vector<std::string> toks = tokenize(query_text);
  if (toks.empty() || index.N == 0) return {};

  std::map<std::string, uint32_t> qtf;
  for (auto& t : toks) qtf[t] += 1;

  std::unordered_map<uint32_t, double> scores;
  for (const auto& [term, qf] : qtf) {
    auto it = index.postings.find(term);
    if (it == index.postings.end()) continue;
    double df = static_cast<double>(it->second.size());
    double idf = std::log((index.N - df + 0.5) / (df + 0.5) + 1.0);
    for (const Posting& p : it->second) {
      double tf = p.tf;
      double norm = k1 * (1.0 - b + b * index.doc_len[p.doc] / index.avgdl);
      scores[p.doc] += qf * idf * tf * (k1 + 1.0) / (tf + norm);
    }
  }

  std::vector<ScoredDoc> out;
  out.reserve(scores.size());
  for (const auto& [doc, s] : scores)
    out.push_back({index.doc_ids[doc], s, index.doc_month[doc]});
  std::sort(out.begin(), out.end(), [](const ScoredDoc& a, const ScoredDoc& b2) {
    if (a.score != b2.score) return a.score > b2.score;
    return a.id < b2.id;
  });
  if (out.size() > topN) out.resize(topN);
  return out;
}

std::vector<ScoredDoc> timekde_rerank(const std::vector<ScoredDoc>& ranked, double bandwidth_h,
                                      double weight_w, size_t topK_fit) {
  if (bandwidth_h <= 0.0) throw Error("timekde: bandwidth must be positive");
  if (ranked.empty() || weight_w == 0.0) return ranked;

  size_t fit_n = std::min(topK_fit, ranked.size());
  double wsum = 0.0;
  bool distinct = false;
  for (size_t i = 0; i < fit_n; ++i) {
    wsum += std::max(ranked[i].score, 0.0);
    if (ranked[i].month != ranked[0].month) distinct = true;
  }
  if (!distinct || wsum <= 0.0) return ranked;  // degenerate density

  const double inv_norm = 1.0 / (wsum * bandwidth_h * std::sqrt(2.0 * M_PI));
  auto density = [&](int64_t month) {
    double acc = 0.0;
    for (size_t i = 0; i < fit_n; ++i) {
      double z = (month - ranked[i].month) / bandwidth_h;
      acc += std::max(ranked[i].score, 0.0) * std::exp(-0.5 * z * z);
    }
    return acc * inv_norm;
  };

  std::vector<ScoredDoc> out = ranked;
  for (auto& d : out) d.score += weight_w * std::log(density(d.month) + 1e-9);
  std::sort(out.begin(), out.end(), [](const ScoredDoc& a, const ScoredDoc& b2) {
    if (a.score != b2.score) return a.score > b2.score;
    return a.id < b2.id;
  });
  return out;
}

namespace {
constexpr char kMagic[6] = {'C', 'Q', 'I', 'D', 'X', '1'};

template <typename T>
void put(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void get(std::ifstream& f, T& v, const std::string& path) {
  if (!f.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw FormatError("index " + path + ": truncated");
}

void put_str(std::ofstream& f, const std::string& s) {
  put(f, static_cast<uint32_t>(s.size()));
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::ifstream& f, const std::string& path) {
  uint32_t len = 0;
  get(f, len, path);
  std::string s(len, '\0');
  if (!f.read(s.data(), len)) throw FormatError("index " + path + ": truncated");
  return s;
}
}  // namespace

void InvertedIndex::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("index: cannot write " + path);
  f.write(kMagic, 6);
  put(f, N);
  put(f, avgdl);
  for (uint32_t d = 0; d < N; ++d) {
    put_str(f, doc_ids[d]);
    put(f, doc_month[d]);
    put(f, doc_len[d]);
  }
  put(f, static_cast<uint64_t>(postings.size()));
  for (const auto& [term, plist] : postings) {
    put_str(f, term);
    put(f, static_cast<uint64_t>(plist.size()));
    for (const Posting& p : plist) {
      put(f, p.doc);
      put(f, p.tf);
    }
  }
}

InvertedIndex InvertedIndex::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("index: cannot read " + path);
  char magic[6];
  if (!f.read(magic, 6) || std::memcmp(magic, kMagic, 6) != 0)
    throw FormatError("index " + path + ": bad magic");

  InvertedIndex idx;
  get(f, idx.N, path);
  get(f, idx.avgdl, path);
  for (uint32_t d = 0; d < idx.N; ++d) {
    idx.doc_ids.push_back(get_str(f, path));
    int64_t month = 0;
    uint32_t len = 0;
    get(f, month, path);
    get(f, len, path);
    idx.doc_month.push_back(month);
    idx.doc_len.push_back(len);
  }
  uint64_t nterms = 0;
  get(f, nterms, path);
  for (uint64_t t = 0; t < nterms; ++t) {
    std::string term = get_str(f, path);
    uint64_t np = 0;
    get(f, np, path);
    auto& plist = idx.postings[term];
    plist.resize(np);
    for (uint64_t i = 0; i < np; ++i) {
      get(f, plist[i].doc, path);
      get(f, plist[i].tf, path);
      if (plist[i].doc >= idx.N)
        throw FormatError("index " + path + ": posting doc out of range");
    }
  }
  return idx;
}

}  // namespace chronokey
