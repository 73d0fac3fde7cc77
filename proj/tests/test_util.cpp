#include <catch2/catch_amalgamated.hpp>

#include "shadowsim/util.hpp"
#include "support/oracles.hpp"

using namespace shadowsim;

TEST_CASE("fnv1a64 matches the reference implementation") {
  // frozen reference values for the standard FNV-1a test vectors
  CHECK(fnv1a64("") == 14695981039346656037ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);

  for (const std::string& s :
       {std::string(""), std::string("hello world"), std::string("key=value\x1f"),
        std::string(512, 'x'), std::string("\x00\x01\x02", 3)})
    CHECK(fnv1a64(s) == oracle::fnv1a64(s));
}

TEST_CASE("digest formatting") {
  CHECK(to_hex16(0) == "0000000000000000");
  CHECK(to_hex16(0xdeadbeef12345678ull) == "deadbeef12345678");
  CHECK(digest8(0xdeadbeef12345678ull) == "deadbeef");
}

TEST_CASE("string helpers") {
  CHECK(to_lower("MiXeD Case") == "mixed case");
  CHECK(trim("  padded\t\n") == "padded");
  CHECK(trim("") == "");
  CHECK(split("a,b,,c", ',') == std::vector<std::string>{"a", "b", "", "c"});
  CHECK(split_nonempty_lines("one\n\n  \ntwo\nthree\n") ==
        std::vector<std::string>{"one", "two", "three"});
}

TEST_CASE("tokenize keeps hashtags, handles, and underscores") {
  auto toks = tokenize("Check #Blackpink NOW!! +v: w12_3 (really)");
  CHECK(toks == std::vector<std::string>{"check", "#blackpink", "now", "+v", "w12_3",
                                         "really"});
}

TEST_CASE("jaccard similarity") {
  CHECK(jaccard(token_set("a b c"), token_set("a b c")) == 1.0);
  CHECK(jaccard(token_set(""), token_set("")) == 1.0);
  CHECK(jaccard(token_set("a b"), token_set("c d")) == 0.0);
  CHECK(jaccard(token_set("a b c d"), token_set("c d e f")) ==
        Catch::Approx(2.0 / 6.0));

  for (const auto& [a, b] : std::vector<std::pair<std::string, std::string>>{
           {"dance beat crew #pop", "the #pop crew loves to dance"},
           {"", "nonempty words"},
           {"Casing MATTERS not", "casing matters NOT"}})
    CHECK(jaccard(token_set(a), token_set(b)) == Catch::Approx(oracle::jaccard(a, b)));
}

TEST_CASE("rng streams are deterministic and seed-sensitive") {
  Rng a(99), b(99), c(100);
  std::vector<std::uint64_t> va, vb, vc;
  for (int i = 0; i < 16; ++i) {
    va.push_back(a.next_u64());
    vb.push_back(b.next_u64());
    vc.push_back(c.next_u64());
  }
  CHECK(va == vb);
  CHECK(va != vc);

  Rng d(5);
  for (int i = 0; i < 200; ++i) {
    double x = d.next_double();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    CHECK(d.uniform(3, 9) >= 3);
    CHECK(d.uniform(3, 9) <= 9);
  }
  CHECK(d.chance(1.0));
  CHECK_FALSE(d.chance(0.0));
  std::vector<int> items{4, 5, 6};
  for (int i = 0; i < 20; ++i) {
    int got = d.pick(items);
    CHECK(got >= 4);
    CHECK(got <= 6);
  }
}

TEST_CASE("sub_seed splits per agent index") {
  CHECK(sub_seed(42, 0) == 42);
  CHECK(sub_seed(42, 7) == (42ull ^ 7ull));
  CHECK(sub_seed(42, 7) != sub_seed(42, 8));
}
