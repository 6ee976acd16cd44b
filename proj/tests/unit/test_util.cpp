// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#include <atomic>
#include <set>
#include <sstream>

#include "ctxsus/error.hpp"
#include "ctxsus/util.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace ctxsus;

TEST_CASE("sha256 known vectors") {
  CHECK(to_hex(sha256("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(to_hex(sha256("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("base64 round trip") {
  const std::string s = "any carnal pleas";
  const auto enc = base64_encode(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
  CHECK(enc == "YW55IGNhcm5hbCBwbGVhcw==");
  const auto dec = base64_decode(enc);
  CHECK(std::string(dec.begin(), dec.end()) == s);
  for (std::size_t n = 0; n < 20; ++n) {
    std::vector<std::uint8_t> b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>(i * 37 + 11);
    CHECK(base64_decode(base64_encode(b.data(), b.size())) == b);
  }
  CHECK_THROWS_AS(base64_decode("abc"), Error);
  CHECK_THROWS_AS(base64_decode("a*cd"), Error);
}

TEST_CASE("derive_seed") {
  CHECK(derive_seed(1, {"a", "b"}) == derive_seed(1, {"a", "b"}));
  CHECK(derive_seed(1, {"a", "b"}) != derive_seed(2, {"a", "b"}));
  CHECK(derive_seed(1, {"ab"}) != derive_seed(1, {"a", "b"}));
  Rng r(5);
  for (int i = 0; i < 1000; ++i) {
    CHECK(uniform_index(r, 7) < 7);
    const double u = uniform_unit(r);
    CHECK((u >= 0.0 && u < 1.0));
  }
}

TEST_CASE("csv") {
  const auto rows = csv::parse("a,b\r\n\"x,1\",\"he said \"\"hi\"\"\"\n,\n");
  REQUIRE(rows.size() == 3);
  CHECK(rows[1][0] == "x,1");
  CHECK(rows[1][1] == "he said \"hi\"");
  CHECK(rows[2] == csv::Row{"", ""});
  std::ostringstream out;
  csv::write_row(out, {"plain", "with,comma", "quote\"", "line\nbreak"});
  const auto back = csv::parse(out.str());
  REQUIRE(back.size() == 1);
  CHECK(back[0] == csv::Row{"plain", "with,comma", "quote\"", "line\nbreak"});
  const auto t = csv::Table::from_text("x,y\n1,2\n");
  CHECK(t.column("y") == 1);
  CHECK_FALSE(t.has_column("z"));
  CHECK_THROWS_AS(t.column("z"), Error);
}

TEST_CASE("format_double round trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 12345.678901234567, -2.5})
    CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("parallel_for") {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) CHECK(h.load() == 1);
  CHECK_THROWS_WITH(parallel_for(100, 3,
                                 [](std::size_t i) {
                                   if (i == 42) throw Error(ErrorCode::io, "boom");
                                 }),
                    "boom");
  parallel_for(0, 4, [](std::size_t) { FAIL("not called"); });
}

TEST_CASE("files and paths") {
  TempDir d;
  write_file(d.file("a.txt"), "hello");
  CHECK(read_file(d.file("a.txt")) == "hello");
  CHECK_THROWS_AS(read_file(d.file("nope.txt")), Error);
  CHECK(resolve_path("/base", "/abs") == "/abs");
  CHECK(resolve_path("/base", "rel/x") == "/base/rel/x");
}
