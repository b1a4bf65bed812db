#include "chronokey/calendar.hpp"

#include <cstdio>
#include <filesystem>

#include "chronokey/rng.hpp"
#include "chronokey/utf8.hpp"
#include "doctest.h"

using namespace chronokey;

namespace {

CalendarManifest small_manifest() {
  CalendarManifest m;
  m.gongs = {"鲁隐公", "鲁桓公", "鲁庄公", "鲁闵公"};
  m.G = 4;
  m.Y = 8;
  m.M = 12;
  return m;
}

}  // namespace

TEST_CASE("chinese numerals parse and render") {
  auto p = [](const char* s) { return parse_cn_number(utf8_decode(s)); };
  CHECK(p("元") == 1);
  CHECK(p("一") == 1);
  CHECK(p("九") == 9);
  CHECK(p("十") == 10);
  CHECK(p("十一") == 11);
  CHECK(p("十九") == 19);
  CHECK(p("二十") == 20);
  CHECK(p("廿") == 20);
  CHECK(p("二十三") == 23);
  CHECK(p("廿三") == 23);
  CHECK(p("三十") == 30);
  CHECK(p("卅一") == 31);
  CHECK(p("九十九") == 99);
  CHECK(p("正") == -1);
  CHECK(p("鲁") == -1);
  CHECK(p("") == -1);
  for (int n = 1; n <= 99; ++n) CHECK(parse_cn_number(utf8_decode(render_cn_number(n))) == n);
}

TEST_CASE("key_to_ordinal frozen examples") {
  CalendarManifest big;
  big.gongs = {"a"};
  big.G = 12;
  big.Y = 33;
  big.M = 13;
  CHECK(key_to_ordinal({0, 1, 1}, big) == 0);
  CHECK(key_to_ordinal({0, 1, 3}, big) == 2);
  CHECK(key_to_ordinal({1, 2, 5}, small_manifest()) == 112);
}

TEST_CASE("key_to_ordinal bounds errors name the field") {
  CalendarManifest m = small_manifest();
  CHECK_THROWS_AS(key_to_ordinal({4, 1, 1}, m), BoundsError);
  CHECK_THROWS_AS(key_to_ordinal({-1, 1, 1}, m), BoundsError);
  CHECK_THROWS_AS(key_to_ordinal({0, 0, 1}, m), BoundsError);
  CHECK_THROWS_AS(key_to_ordinal({0, 9, 1}, m), BoundsError);
  CHECK_THROWS_AS(key_to_ordinal({0, 1, 0}, m), BoundsError);
  CHECK_THROWS_AS(key_to_ordinal({0, 1, 13}, m), BoundsError);
  try {
    key_to_ordinal({0, 9, 1}, m);
  } catch (const BoundsError& e) {
    CHECK(std::string(e.what()).find("year") != std::string::npos);
  }
}

TEST_CASE("ordinal bijection and order preservation") {
  CalendarManifest m = small_manifest();
  for (int64_t o = 0; o < m.span(); ++o) {
    TimeKey k = ordinal_to_key(o, m);
    CHECK(key_to_ordinal(k, m) == o);
  }
  Rng rng(7);
  for (int t = 0; t < 500; ++t) {
    TimeKey a = ordinal_to_key(static_cast<int64_t>(rng.bounded(m.span())), m);
    TimeKey b = ordinal_to_key(static_cast<int64_t>(rng.bounded(m.span())), m);
    CHECK((key_to_ordinal(a, m) < key_to_ordinal(b, m)) == (a < b));
  }
}

TEST_CASE("linearize_soft endpoints and hard-coordinate identity") {
  CalendarManifest m = small_manifest();
  CHECK(linearize_soft(0, 0, 0, m) == 0.0);
  CHECK(linearize_soft(m.G - 1, m.Y - 1, m.M - 1, m) == 1.0);
  CHECK(linearize_soft(2, 0, 0, m) == 192.0 / 383.0);
  // Exact agreement with the integer linearization at every grid point.
  for (int64_t o = 0; o < m.span(); ++o) {
    TimeKey k = ordinal_to_key(o, m);
    CHECK(linearize_soft(k.gong, k.year - 1, k.month - 1, m) ==
          static_cast<double>(o) / static_cast<double>(m.span() - 1));
  }
  CHECK_THROWS_AS(linearize_soft(-0.5, 0, 0, m), Error);
  CHECK_THROWS_AS(linearize_soft(0, 0, 12.5, m), Error);
}

TEST_CASE("interval_overlap equals brute force") {
  CalendarManifest m = small_manifest();
  m.G = 2;
  m.Y = 3;
  m.M = 4;
  m.gongs = {"A", "B"};
  Rng rng(11);
  for (int t = 0; t < 2000; ++t) {
    auto rand_iv = [&] {
      int64_t a = static_cast<int64_t>(rng.bounded(m.span()));
      int64_t b = static_cast<int64_t>(rng.bounded(m.span()));
      if (a > b) std::swap(a, b);
      return Interval{ordinal_to_key(a, m), ordinal_to_key(b, m)};
    };
    Interval q = rand_iv(), i = rand_iv();
    bool brute = false;
    for (int64_t o1 = key_to_ordinal(q.start, m); o1 <= key_to_ordinal(q.end, m); ++o1)
      for (int64_t o2 = key_to_ordinal(i.start, m); o2 <= key_to_ordinal(i.end, m); ++o2)
        if (o1 == o2) brute = true;
    CHECK(interval_overlap(q, i, m) == brute);
  }
}

TEST_CASE("render_key traditional forms") {
  CalendarManifest m = small_manifest();
  m.M = 13;
  CHECK(render_key({0, 1, 1}, m) == "鲁隐公元年正月");
  CHECK(render_key({1, 1, 3}, m) == "鲁桓公元年三月");
  CHECK(render_key({0, 2, 1}, m) == "鲁隐公二年正月");
  CHECK(render_key({0, 1, 12}, m) == "鲁隐公元年十二月");
  CHECK(render_key({0, 1, 13}, m) == "鲁隐公元年闰月");
}

TEST_CASE("scanner golden suite") {
  CalendarManifest m = small_manifest();
  std::vector<std::string> lines = {
      "元年，春，王正月。",
      "三月，公及邾仪父盟于蔑。",
      "二年，春，公会戎于潜。",
      "元年，春，王正月，公即位。",
  };
  auto out = scan_annal_stream(lines, m);
  REQUIRE(out.size() == 4);
  CHECK(out[0].key == TimeKey{0, 1, 1});
  CHECK(out[1].key == TimeKey{0, 1, 3});
  CHECK(out[2].key == TimeKey{0, 2, 1});
  CHECK(out[3].key == TimeKey{1, 1, 1});
}

TEST_CASE("scanner inherits, resets month on bare year, handles intercalary") {
  CalendarManifest m = small_manifest();
  m.M = 13;
  std::vector<std::string> lines = {
      "元年，春，王正月。",
      "郑伯克段于鄢。",          // no cue: inherit
      "夏五月，葬宋穆公。",      // season prefix before month cue
      "闰月，王崩。",            // intercalary month
      "三年，夏四月，日有食之。",  // year + month in one line
  };
  auto out = scan_annal_stream(lines, m);
  CHECK(out[1].key == TimeKey{0, 1, 1});
  CHECK(out[2].key == TimeKey{0, 1, 5});
  CHECK(out[3].key == TimeKey{0, 1, 13});
  CHECK(out[4].key == TimeKey{0, 3, 4});
}

TEST_CASE("scanner full reign formula and explicit ruler") {
  CalendarManifest m = small_manifest();
  std::vector<std::string> lines = {
      "鲁庄公三年，春，王二月。",  // full formula jumps reign and year
      "秋七月，齐师入我。",
  };
  auto out = scan_annal_stream(lines, m);
  CHECK(out[0].key == TimeKey{2, 3, 2});
  CHECK(out[1].key == TimeKey{2, 3, 7});
}

TEST_CASE("scanner is prefix-stable and deterministic") {
  CalendarManifest m = small_manifest();
  std::vector<std::string> lines = {
      "元年，春，王正月。", "三月，公及邾仪父盟于蔑。", "二年，春，公会戎于潜。",
      "夏四月。",           "元年，春，王正月，公即位。", "二月，葬陈庄公。",
  };
  auto full = scan_annal_stream(lines, m);
  for (size_t n = 1; n <= lines.size(); ++n) {
    std::vector<std::string> prefix(lines.begin(), lines.begin() + n);
    auto part = scan_annal_stream(prefix, m);
    REQUIRE(part.size() == n);
    for (size_t i = 0; i < n; ++i) CHECK(part[i].key == full[i].key);
  }
}

TEST_CASE("scanner error paths") {
  CalendarManifest m = small_manifest();
  // Unanchored stream: no initial reign cue and no seed.
  CHECK_THROWS_AS(scan_annal_stream({"三月，公至自唐。"}, m), Error);
  // Seed key anchors an otherwise unanchored stream.
  auto out = scan_annal_stream({"三月，公至自唐。"}, m, TimeKey{1, 4, 1});
  CHECK(out[0].key == TimeKey{1, 4, 3});
  // Accession past the last gong.
  std::vector<std::string> lines = {"鲁闵公元年，春，王正月。", "元年，春，王正月，公即位。"};
  CHECK_THROWS_AS(scan_annal_stream(lines, m), Error);
  // Ruler mentioned that the manifest does not know.
  CalendarManifest m2 = small_manifest();
  m2.lexicon.rulers = {"鲁僖公"};
  CHECK_THROWS_AS(scan_annal_stream({"鲁僖公元年，春，王正月。"}, m2), Error);
}

TEST_CASE("manifest validation and round trip") {
  CalendarManifest m = small_manifest();
  CHECK_NOTHROW(m.validate());
  CalendarManifest bad = m;
  bad.G = 3;  // fewer than listed gongs
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = m;
  bad.M = 11;  // must cover 12 natural months
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = m;
  bad.G = 1;
  bad.Y = 1;
  bad.M = 12;
  bad.gongs = {"x"};
  CHECK_NOTHROW(bad.validate());

  std::string path = (std::filesystem::temp_directory_path() / "ck_manifest.json").string();
  m.save(path);
  CalendarManifest back = CalendarManifest::load(path);
  CHECK(back.to_json() == m.to_json());
  CHECK(back.hash() == m.hash());
  back.Y = 9;
  CHECK(back.hash() != m.hash());
  std::filesystem::remove(path);
}
