#include "chronokey/embed.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "chronokey/rng.hpp"
#include "doctest.h"

using namespace chronokey;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

std::string random_text(Rng& rng, size_t len) {
  // CJK ideographs starting at U+4E00 give multi-byte tokens like real input
  std::string s;
  for (size_t i = 0; i < len; ++i) {
    uint32_t cp = 0x4E00 + static_cast<uint32_t>(rng.bounded(2000));
    s += static_cast<char>(0xE0 | (cp >> 12));
    s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return s;
}

}  // namespace

TEST_CASE("hash encoding is deterministic and seed-sensitive") {
  std::string text = "元年春王正月";
  auto a = hash_encode(text, 64, 7);
  auto b = hash_encode(text, 64, 7);
  CHECK(a == b);
  auto c = hash_encode(text, 64, 8);
  CHECK(a != c);
  CHECK(hash_encode("", 64, 7) == std::vector<double>(64, 0.0));
  CHECK_THROWS_AS(hash_encode("x", 4, 7), Error);  // H too small
}

TEST_CASE("hash encoding scale follows distinct feature count") {
  // A single character has one unigram feature and no bigram: each dimension
  // accumulates exactly +-1 and the 1/sqrt(nnz) scale is 1.
  auto v = hash_encode("鲁", 64, 0);
  for (double x : v) CHECK(std::abs(x) == 1.0);
  CHECK(norm(v) == doctest::Approx(8.0).epsilon(1e-12));
  // Doubling a character adds one bigram feature: nnz = 2, scale 1/sqrt(2).
  auto w = hash_encode("鲁鲁", 64, 0);
  for (double x : w) CHECK((std::abs(x) < 1e-12 || std::abs(std::abs(x) - 3.0 / std::sqrt(2.0)) < 1e-12 ||
                            std::abs(std::abs(x) - 1.0 / std::sqrt(2.0)) < 1e-12));
}

TEST_CASE("random long texts are near-orthogonal on average") {
  Rng rng(3);
  const int trials = 200;
  double acc = 0.0;
  for (int t = 0; t < trials; ++t) {
    auto a = hash_encode(random_text(rng, 40), 64, 1);
    auto b = hash_encode(random_text(rng, 40), 64, 1);
    double na = norm(a), nb = norm(b);
    REQUIRE(na > 0);
    REQUIRE(nb > 0);
    acc += dot(a, b) / (na * nb);
  }
  CHECK(std::abs(acc / trials) < 0.05);  // Monte Carlo: mean cosine ~ 0
}

TEST_CASE("batch encoding normalizes rows unless disabled") {
  std::vector<std::string> ids = {"a", "b"};
  std::vector<std::string> texts = {"元年春王正月", "三月公及邾仪父盟于蔑"};
  EmbeddingMatrix em = hash_encode_all(ids, texts, 32, 5);
  for (size_t i = 0; i < em.count(); ++i) {
    double n2 = 0;
    for (int k = 0; k < em.H; ++k) n2 += double(em.vec(i)[k]) * em.vec(i)[k];
    CHECK(std::sqrt(n2) == doctest::Approx(1.0).epsilon(1e-5));
  }
  EmbeddingMatrix raw = hash_encode_all(ids, texts, 32, 5, false);
  double n2 = 0;
  for (int k = 0; k < raw.H; ++k) n2 += double(raw.vec(0)[k]) * raw.vec(0)[k];
  CHECK(std::sqrt(n2) != doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("embedding matrix round trip and lookup") {
  EmbeddingMatrix em = hash_encode_all({"a", "b", "c"}, {"甲", "乙乙", "丙丙丙"}, 16, 9);
  std::string path = (std::filesystem::temp_directory_path() / "ck_emb.bin").string();
  em.save(path);
  EmbeddingMatrix back = EmbeddingMatrix::load(path);
  CHECK(back.H == em.H);
  REQUIRE(back.count() == em.count());
  CHECK(back.ids == em.ids);
  CHECK(back.data == em.data);
  CHECK(back.at("b") == 1);
  CHECK_THROWS_AS(back.at("zz"), Error);
  std::filesystem::remove(path);
}

TEST_CASE("truncated embedding file is rejected with a format error") {
  EmbeddingMatrix em = hash_encode_all({"a", "b"}, {"甲", "乙"}, 16, 9);
  std::string path = (std::filesystem::temp_directory_path() / "ck_emb_trunc.bin").string();
  em.save(path);
  auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 7);
  CHECK_THROWS_AS(EmbeddingMatrix::load(path), FormatError);
  // bad magic
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOTEMB1garbage";
  }
  CHECK_THROWS_AS(EmbeddingMatrix::load(path), FormatError);
  std::filesystem::remove(path);
}
