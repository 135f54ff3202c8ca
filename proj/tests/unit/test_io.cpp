#include <cmath>
#include <filesystem>
#include <limits>

#include <gtest/gtest.h>

#include "equibench/io.hpp"
#include "equibench/rng.hpp"

using namespace equibench;

TEST(FormatDouble, RoundTrips) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-30, 30));
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(3.0), "3");
}

TEST(ContentHash, IgnoresKeyOrder) {
  const auto a = nlohmann::json::parse(R"({"a":1,"b":[1,2]})");
  const auto b = nlohmann::json::parse(R"({"b":[1,2],"a":1})");
  EXPECT_EQ(content_hash(a), content_hash(b));
  EXPECT_NE(content_hash(a), content_hash(nlohmann::json::parse(R"({"a":2,"b":[1,2]})")));
  EXPECT_EQ(content_hash(a).size(), 16u);
}

TEST(Files, WriteCreatesParentsAndReadsBack) {
  const auto dir = std::filesystem::temp_directory_path() / "equibench-io-test";
  std::filesystem::remove_all(dir);
  const auto path = dir / "a" / "b" / "x.json";
  write_json_file(path, {{"k", 1.25}});
  EXPECT_EQ(read_json_file(path).at("k").get<double>(), 1.25);
  const auto first = file_checksum(path);
  write_json_file(path, {{"k", 1.25}});
  EXPECT_EQ(file_checksum(path), first);
  std::filesystem::remove_all(dir);
}

TEST(Rng, StreamsAreIndependentAndReproducible) {
  Rng a = Rng::stream(5, "init");
  Rng b = Rng::stream(5, "init");
  Rng c = Rng::stream(5, "shuffle");
  const auto x = a.next_u64();
  EXPECT_EQ(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
  EXPECT_NE(Rng::stream(5, "e", 0).next_u64(), Rng::stream(5, "e", 1).next_u64());
}

TEST(Rng, BelowAndUniformRanges) {
  Rng rng(3);
  double mean = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const auto k = rng.below(7);
    ASSERT_LT(k, 7u);
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    mean += rng.normal();
  }
  EXPECT_NEAR(mean / 20000.0, 0.0, 0.05);
}
