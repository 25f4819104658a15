/* Copyright 2026 The provgad Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#include <algorithm>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "doctest.h"
#include "provgad/error.hpp"
#include "provgad/hash.hpp"
#include "provgad/ingest.hpp"
#include "provgad/rng.hpp"

using namespace provgad;

namespace {

std::vector<std::string> random_lines(Rng& rng, std::size_t n) {
  static const char* kTypes[] = {"a", "b", "c", "proc", "file"};
  static const char* kEdges[] = {"r", "w", "x", "fork"};
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < n; ++i) {
    lines.push_back(std::to_string(rng.below(50)) + "\t" + kTypes[rng.below(5)] + "\t" +
                    std::to_string(rng.below(50)) + "\t" + kTypes[rng.below(5)] + "\t" +
                    kEdges[rng.below(4)] + "\t" + std::to_string(rng.below(4)));
  }
  return lines;
}

}  // namespace

TEST_CASE("xxh64 reference vectors") {
  CHECK(xxh64("") == 0xEF46DB3751D8E999ULL);
  CHECK(xxh64("a") == 0xD24EC4F1A98C6E5BULL);
  CHECK(xxh64("abc") == 0x44BC2CF5AD770999ULL);
  CHECK(xxh64("0123456789abcdef0123456789abcdef0123456789") == 0xA76190C3ACF08A1CULL);
  CHECK(xxh64("The quick brown fox jumps over the lazy dog") == 0x0B242D361FDA71BCULL);
  CHECK(xxh64("abc", 1) == 0xBEA9CA8199328908ULL);
  CHECK(to_hex(0xAB) == "00000000000000ab");
}

TEST_CASE("hash_label") {
  CHECK(hash_label({"a"}) == hash_label({"a"}));
  CHECK(hash_label({"a"}).value == xxh64("a"));
  CHECK(hash_label({"a", "b"}) == hash_label({"b", "a"}));
  CHECK(hash_label({"a", "b"}).value == xxh64(std::string("a\0b", 3)));
  CHECK(hash_label({"ab"}) != hash_label({"a", "b"}));
  std::vector<std::string> empty;
  CHECK_THROWS_AS(hash_label(std::span<const std::string>(empty)), ValidationError);
}

TEST_CASE("hash_label collision rate over 10^6 distinct tuples") {
  Rng rng(2024);
  std::unordered_set<std::string> tuples;
  std::unordered_set<std::uint64_t> ids;
  std::size_t attempts = 0;
  while (tuples.size() < 1000000) {
    ++attempts;
    std::vector<std::string> attrs(1 + rng.below(3));
    for (auto& a : attrs) a = std::to_string(rng.next() % 100000000);
    std::sort(attrs.begin(), attrs.end());
    std::string key;
    for (const auto& a : attrs) key += a + '\x1f';
    if (!tuples.insert(key).second) continue;
    ids.insert(hash_label(std::span<const std::string>(attrs)).value);
  }
  const double rate = static_cast<double>(tuples.size() - ids.size()) / tuples.size();
  CHECK(rate < 1e-6);
}

TEST_CASE("streamspot lines") {
  const RawEvent ev = parse_streamspot_line("12\ta\t34\tb\tr\t7");
  CHECK(ev.src_uid == "12");
  CHECK(ev.dst_uid == "34");
  CHECK(ev.src_label == hash_label({"a"}));
  CHECK(ev.dst_label == hash_label({"b"}));
  CHECK(ev.edge_label == hash_label({"r"}));
  CHECK(ev.batch_id == "7");
  CHECK(parse_streamspot_line("12\ta\t34\tb\tr\t7\r") == ev);

  try {
    parse_streamspot_line("12\ta\t34\tb", 9);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 9);
    CHECK(e.field_count() == 4);
  }
  CHECK_THROWS_AS(parse_streamspot_line("\ta\t34\tb\tr\t7"), ParseError);

  const auto two = parse_lines({"1\ta\t2\tb\tr\t0", "1\ta\t2\tb\tr\t0"}, LogFormat::kStreamSpot);
  REQUIRE(two.size() == 2);
  CHECK(two[0] == two[1]);
}

TEST_CASE("jsonl records") {
  const std::string text =
      R"({"src":{"uid":"p1","attrs":["Process"]},"dst":{"uid":"f1","attrs":["FileObject"]},)"
      R"("edge":{"attrs":["execute"]},"batch":"b0"})";
  const RawEvent ev = parse_jsonl_record(text);
  CHECK(ev.src_uid == "p1");
  CHECK(ev.dst_uid == "f1");
  CHECK(ev.batch_id == "b0");
  CHECK(ev.src_label != ev.dst_label);
  CHECK(ev.src_label != ev.edge_label);
  CHECK(ev.dst_label != ev.edge_label);
  CHECK(ev.src_label == hash_label({"Process"}));

  const RawEvent a = parse_jsonl_record(
      R"({"src":{"uid":"p","attrs":["x","y"]},"dst":{"uid":"q","attrs":["z"]},"edge":{"attrs":["e"]},"batch":"0"})");
  const RawEvent b = parse_jsonl_record(
      R"({"src":{"uid":"p","attrs":["y","x"]},"dst":{"uid":"q","attrs":["z"]},"edge":{"attrs":["e"]},"batch":"0"})");
  CHECK(a.src_label == b.src_label);

  try {
    parse_jsonl_record(R"({"src":{"uid":"p","attrs":["x"]},"dst":{"uid":"q","attrs":["z"]},"batch":"0"})");
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("edge") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_jsonl_record(R"({"src":{"uid":1,"attrs":["x"]}})"), SchemaError);
  CHECK_THROWS_AS(parse_jsonl_record("not json"), SchemaError);
}

TEST_CASE("parsing is order preserving over concatenation") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Rng rng(seed);
    auto a = random_lines(rng, rng.below(40));
    auto b = random_lines(rng, rng.below(40));
    auto ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    auto pa = parse_lines(a, LogFormat::kStreamSpot);
    const auto pb = parse_lines(b, LogFormat::kStreamSpot);
    pa.insert(pa.end(), pb.begin(), pb.end());
    CHECK(parse_lines(ab, LogFormat::kStreamSpot) == pa);
  }
}

TEST_CASE("threaded parsing keeps input order") {
  Rng rng(77);
  const auto lines = random_lines(rng, 1000);
  const auto serial = parse_lines(lines, LogFormat::kStreamSpot, 1);
  CHECK(parse_lines(lines, LogFormat::kStreamSpot, 4) == serial);
  CHECK(parse_lines(lines, LogFormat::kStreamSpot, 3) == serial);
}

TEST_CASE("streams skip blank lines and report line numbers") {
  std::istringstream in("1\ta\t2\tb\tr\t0\n\n3\ta\t4\tb\tw\t0\n");
  CHECK(parse_stream(in, LogFormat::kStreamSpot).size() == 2);
  std::istringstream bad("1\ta\t2\tb\tr\t0\n\nbroken\n");
  try {
    parse_stream(bad, LogFormat::kStreamSpot);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(e.field_count() == 1);
  }
}

TEST_CASE("label vocabulary of a fixed input is reproducible") {
  Rng r1(5), r2(5);
  auto collect = [](const std::vector<RawEvent>& evs) {
    std::set<std::uint64_t> ids;
    for (const auto& e : evs) {
      ids.insert(e.src_label.value);
      ids.insert(e.dst_label.value);
      ids.insert(e.edge_label.value);
    }
    return ids;
  };
  CHECK(collect(parse_lines(random_lines(r1, 300), LogFormat::kStreamSpot)) ==
        collect(parse_lines(random_lines(r2, 300), LogFormat::kStreamSpot)));
}

TEST_CASE("group_by_batch keeps first appearance order") {
  const auto evs = parse_lines({"1\ta\t2\tb\tr\t9", "1\ta\t2\tb\tw\t3", "2\tb\t1\ta\tx\t9"},
                               LogFormat::kStreamSpot);
  const auto batches = group_by_batch(evs);
  REQUIRE(batches.size() == 2);
  CHECK(batches[0].batch_id == "9");
  CHECK(batches[0].events.size() == 2);
  CHECK(batches[0].events[1] == evs[2]);
  CHECK(batches[1].batch_id == "3");
}

TEST_CASE("log format names") {
  CHECK(parse_log_format("streamspot") == LogFormat::kStreamSpot);
  CHECK(parse_log_format("jsonl") == LogFormat::kJsonl);
  CHECK(to_string(LogFormat::kJsonl) == "jsonl");
  CHECK_THROWS_AS(parse_log_format("csv"), ValidationError);
}
