#include "chronokey/embed.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "chronokey/rng.hpp"
#include "chronokey/utf8.hpp"

namespace chronokey {

size_t EmbeddingMatrix::at(const std::string& id) const {
  auto it = index.find(id);
  if (it == index.end()) throw Error("embedding matrix: unknown id '" + id + "'");
  return it->second;
}

void EmbeddingMatrix::rebuild_index() {
  index.clear();
  for (size_t i = 0; i < ids.size(); ++i) {
    if (!index.emplace(ids[i], i).second)
      throw Error("embedding matrix: duplicate id '" + ids[i] + "'");
  }
}

std::vector<double> hash_encode(const std::string& text, int H, uint64_t seed) {
  if (H < 8) throw Error("hash_encode: H must be >= 8");
  std::vector<double> v(static_cast<size_t>(H), 0.0);
  if (text.empty()) return v;  // zero vector by contract

  std::u32string u = utf8_decode(text);
  std::map<uint64_t, double> counts;
  auto feature = [](const std::u32string& gram) {
    std::string bytes = utf8_encode(gram);
    return fnv1a64(bytes.data(), bytes.size());
  };
  for (size_t i = 0; i < u.size(); ++i) counts[feature(u.substr(i, 1))] += 1.0;
  for (size_t i = 0; i + 1 < u.size(); ++i) counts[feature(u.substr(i, 2))] += 1.0;

  // Implicit random sign matrix: entry (f, d) is the parity of a seeded mix.
  for (int d = 0; d < H; ++d) {
    uint64_t dim_seed = mix64(seed * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(d));
    double acc = 0.0;
    for (const auto& [f, c] : counts) {
      acc += (mix64(f ^ dim_seed) & 1u) ? c : -c;
    }
    v[static_cast<size_t>(d)] = acc;
  }
  double scale = 1.0 / std::sqrt(static_cast<double>(counts.size()));
  for (double& x : v) x *= scale;
  return v;
}

EmbeddingMatrix hash_encode_all(const std::vector<std::string>& ids,
                                const std::vector<std::string>& texts, int H, uint64_t seed,
                                bool l2_normalize) {
  if (ids.size() != texts.size()) throw Error("hash_encode_all: ids/texts size mismatch");
  EmbeddingMatrix m;
  m.H = H;
  m.ids = ids;
  m.data.resize(ids.size() * static_cast<size_t>(H));
  for (size_t i = 0; i < texts.size(); ++i) {
    std::vector<double> v = hash_encode(texts[i], H, seed);
    if (l2_normalize) {
      double n2 = 0.0;
      for (double x : v) n2 += x * x;
      if (n2 > 0.0) {
        double inv = 1.0 / std::sqrt(n2);
        for (double& x : v) x *= inv;
      }
    }
    float* row = m.vec(i);
    for (int d = 0; d < H; ++d) row[d] = static_cast<float>(v[static_cast<size_t>(d)]);
  }
  m.rebuild_index();
  return m;
}

namespace {
constexpr char kMagic[6] = {'C', 'Q', 'E', 'M', 'B', '1'};
}

void EmbeddingMatrix::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("embeddings: cannot write " + path);
  f.write(kMagic, 6);
  uint32_t h = static_cast<uint32_t>(H);
  uint64_t n = ids.size();
  f.write(reinterpret_cast<const char*>(&h), 4);
  f.write(reinterpret_cast<const char*>(&n), 8);
  for (const auto& id : ids) {
    uint32_t len = static_cast<uint32_t>(id.size());
    f.write(reinterpret_cast<const char*>(&len), 4);
    f.write(id.data(), len);
  }
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(float)));
}

EmbeddingMatrix EmbeddingMatrix::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("embeddings: cannot read " + path);
  auto fail = [&](const std::string& what) {
    throw FormatError("embeddings " + path + ": " + what + " at byte offset " +
                      std::to_string(static_cast<long long>(f.tellg())));
  };

  char magic[6];
  if (!f.read(magic, 6)) fail("truncated header");
  if (std::memcmp(magic, kMagic, 6) != 0) throw FormatError("embeddings " + path + ": bad magic");

  uint32_t h = 0;
  uint64_t n = 0;
  if (!f.read(reinterpret_cast<char*>(&h), 4)) fail("truncated header");
  if (!f.read(reinterpret_cast<char*>(&n), 8)) fail("truncated header");

  EmbeddingMatrix m;
  m.H = static_cast<int>(h);
  if (m.H < 1) throw FormatError("embeddings " + path + ": invalid dimension");
  m.ids.reserve(n);
  for (uint64_t i = 0; i < n; ++i) {
    uint32_t len = 0;
    if (!f.read(reinterpret_cast<char*>(&len), 4)) fail("truncated id table");
    std::string id(len, '\0');
    if (!f.read(id.data(), len)) fail("truncated id table");
    m.ids.push_back(std::move(id));
  }
  m.data.resize(n * h);
  if (!f.read(reinterpret_cast<char*>(m.data.data()),
              static_cast<std::streamsize>(m.data.size() * sizeof(float))))
    fail("truncated vector rows");
  for (float v : m.data)
    if (!std::isfinite(v)) throw FormatError("embeddings " + path + ": non-finite value");
  m.rebuild_index();
  return m;
}

}  // namespace chronokey
