#include <gtest/gtest.h>

#include <random>
#include <set>

#include "scd/search_space.hpp"
#include "test_support.hpp"

namespace {

using namespace scd;
using scd::test::int_schema;

std::vector<ExecutableSchema> executables(std::size_t n) {
  std::vector<ExecutableSchema> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(int_schema("ex" + std::to_string(1000 + i), 1, 1));
  return out;
}

TEST(Bes, PaperStudySize) {
  EXPECT_EQ(bes_size(108), 5778u);
  EXPECT_EQ(build_bes(executables(108)).size(), 5778u);
}

TEST(Bes, SmallSizes) {
  EXPECT_EQ(bes_size(2), 1u);
  EXPECT_EQ(build_bes(executables(5)).size(), 10u);
  EXPECT_SCD_ERROR(bes_size(1), Errc::TooFew);
}

TEST(Bes, ClosedFormAgainstIteratedSum) {
  for (std::uint64_t n : {2ull, 3ull, 17ull, 1000ull, 123457ull}) {
    std::uint64_t sum = 0;
    for (std::uint64_t k = 1; k < n; ++k) sum += k;
    EXPECT_EQ(bes_size(n), sum);
  }
  EXPECT_EQ(bes_size(1000), 499500u);
  // Stays exact where the naive n*(n-1) product would overflow.
  EXPECT_EQ(bes_size(std::uint64_t{1} << 32), (std::uint64_t{1} << 31) * ((std::uint64_t{1} << 32) - 1));
}

TEST(Bes, LexicographicAndCanonical) {
  std::vector<ExecutableSchema> ex{int_schema("c", 1, 1), int_schema("a", 1, 1), int_schema("b", 1, 1)};
  const auto bes = build_bes(ex);
  EXPECT_EQ(bes, (std::vector<CandidatePair>{{"a", "b"}, {"a", "c"}, {"b", "c"}}));
  EXPECT_EQ(CandidatePair("z", "y"), CandidatePair("y", "z"));
  EXPECT_SCD_ERROR(CandidatePair("x", "x"), Errc::InvalidArgument);
}

TEST(Bes, DuplicateId) {
  std::vector<ExecutableSchema> ex{int_schema("a", 1, 1), int_schema("a", 1, 1)};
  EXPECT_SCD_ERROR(build_bes(ex), Errc::DuplicateId);
}

TEST(BesProperty, SizeMatchesClosedFormUpToFifty) {
  for (std::size_t n = 2; n <= 50; ++n) {
    const auto bes = build_bes(executables(n));
    EXPECT_EQ(bes.size(), bes_size(n));
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& c : bes) {
      EXPECT_LT(c.a, c.b);
      EXPECT_TRUE(seen.insert({c.a, c.b}).second);
    }
  }
}

TEST(Wes, PaperExampleFaFd) {
  EXPECT_EQ(build_wes(scd::test::fa_schema(), scd::test::fd_schema()).size(), 2u);
}

TEST(Wes, NoOutputsMeansNoLinks) { EXPECT_TRUE(build_wes(int_schema("a", 2, 0), int_schema("b", 1, 1)).empty()); }

TEST(Wes, TwoInputsEach) { EXPECT_EQ(build_wes(int_schema("a", 2, 1), int_schema("b", 2, 1)).size(), 4u); }

TEST(WesProperty, SizeIsProductOfPairCounts) {
  std::mt19937_64 rng(41);
  for (int k = 0; k < 500; ++k) {
    const auto a = int_schema("a", rng() % 5, rng() % 4), b = int_schema("b", rng() % 5, rng() % 4);
    EXPECT_EQ(build_wes(a, b).size(), io_pairs(a).size() * io_pairs(b).size());
  }
}

TEST(TotalSpace, SingleCandidate) {
  std::vector<ExecutableSchema> ex{scd::test::fa_schema(), scd::test::fd_schema()};
  EXPECT_EQ(total_space(ex), 2u);
}

TEST(TotalSpace, MatchesEnumeration) {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ExecutableSchema> ex;
    for (int i = 0; i < 12; ++i) ex.push_back(int_schema("e" + std::to_string(i), rng() % 4, rng() % 3));
    std::uint64_t enumerated = 0;
    for (std::size_t i = 0; i < ex.size(); ++i)
      for (std::size_t j = i + 1; j < ex.size(); ++j) enumerated += build_wes(ex[i], ex[j]).size();
    EXPECT_EQ(total_space(ex), enumerated);
  }
}

TEST(CloneClasses, Examples) {
  const std::vector<std::string> ids{"a", "b", "c", "d"};
  CloneClasses cc(ids);
  EXPECT_FALSE(cc.same_class("a", "b"));
  EXPECT_TRUE(cc.same_class("a", "a"));
  cc.unite("a", "b");
  cc.unite("b", "c");
  EXPECT_TRUE(cc.same_class("a", "c"));
  EXPECT_FALSE(cc.same_class("a", "d"));
  EXPECT_EQ(cc.classes(), (std::vector<std::vector<std::string>>{{"a", "b", "c"}, {"d"}}));
  EXPECT_SCD_ERROR(cc.same_class("a", "zz"), Errc::UnknownId);
}

// Oracle: Floyd-Warshall style transitive closure of the union edges.
TEST(CloneClassesProperty, MatchesTransitiveClosure) {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 19;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("x" + std::to_string(i));
    CloneClasses cc(ids);
    std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i) reach[i][i] = true;
    const std::size_t unions = rng() % (n + 3);
    for (std::size_t u = 0; u < unions; ++u) {
      const std::size_t a = rng() % n, b = rng() % n;
      cc.unite(ids[a], ids[b]);
      reach[a][b] = reach[b][a] = true;
    }
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (reach[i][k] && reach[k][j]) reach[i][j] = true;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(cc.same_class(ids[i], ids[j]), reach[i][j]);
    std::size_t members = 0;
    for (const auto& c : cc.classes()) members += c.size();
    EXPECT_EQ(members, n);
  }
}

}  // namespace
