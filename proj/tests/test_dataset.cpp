#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "cprec/dataset.hpp"
#include "test_support.hpp"

using namespace cprec;
using cprec::testing::make_dataset;
using cprec::testing::random_dataset;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("cprec_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("ingest builds id-mapped positives in first-seen order") {
  const auto d = make_dataset({{"a", "x"}, {"b", "x"}, {"a", "y"}}, {{"x", "b"}, {"y", "a"}});
  CHECK(d.n_users() == 2);
  CHECK(d.n_items() == 2);
  const UserId a = *d.users.find("a"), b = *d.users.find("b");
  const ItemId x = *d.items.find("x"), y = *d.items.find("y");
  CHECK(a == 0);
  CHECK(x == 0);
  CHECK(d.positives[a] == std::vector<ItemId>{x, y});
  CHECK(d.positives[b] == std::vector<ItemId>{x});
  CHECK(d.producer_of[x] == b);
  CHECK(d.producer_of[y] == a);
  d.validate();
}

TEST_CASE("ingest edge cases") {
  SUBCASE("empty stream") {
    const auto d = ingest({}, {});
    CHECK(d.n_users() == 0);
    CHECK(d.n_items() == 0);
  }
  SUBCASE("duplicates collapse") {
    const auto d = make_dataset({{"a", "x"}, {"a", "x"}}, {{"x", "a"}});
    CHECK(d.positives[0].size() == 1);
  }
  SUBCASE("missing producer") {
    CHECK_THROWS_AS(make_dataset({{"a", "x"}}, {{"y", "a"}}), MissingProducer);
    try {
      make_dataset({{"a", "x"}}, {});
    } catch (const MissingProducer& e) {
      CHECK(e.item_token() == "x");
      CHECK(e.code() == ErrorCode::kMissingProducer);
    }
  }
  SUBCASE("conflicting producers are malformed") {
    CHECK_THROWS_AS(make_dataset({{"a", "x"}}, {{"x", "a"}, {"x", "b"}}), MalformedRecord);
  }
  SUBCASE("producer-only users get ids after consumers") {
    const auto d = make_dataset({{"a", "x"}}, {{"x", "p"}});
    CHECK(d.n_users() == 2);
    CHECK(d.users.token(1) == "p");
    CHECK(d.positives[1].empty());
  }
}

TEST_CASE("token round trip is the identity") {
  std::mt19937_64 rng(3);
  const auto d = random_dataset(rng, 30, 40, 0.2);
  for (UserId u = 0; u < d.n_users(); ++u) CHECK(*d.users.find(d.users.token(u)) == u);
  for (ItemId i = 0; i < d.n_items(); ++i) CHECK(*d.items.find(d.items.token(i)) == i);
}

TEST_CASE("file readers") {
  const auto dir = temp_dir("readers");
  {
    std::ofstream f(dir / "inter.tsv");
    f << "a\tx\t123\textra\r\n\nb\tx\n";
  }
  const auto rows = read_interactions(dir / "inter.tsv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].user_token == "a");
  CHECK(rows[0].item_token == "x");
  {
    std::ofstream f(dir / "bad.tsv");
    f << "a\tx\nonly-one-column\n";
  }
  try {
    read_interactions(dir / "bad.tsv");
    FAIL("expected MalformedRecord");
  } catch (const MalformedRecord& e) {
    CHECK(e.line() == "only-one-column");
  }
  CHECK_THROWS_AS(read_producers(dir / "missing.tsv"), Error);
}

TEST_CASE("filter_inactive") {
  SUBCASE("single pass empties a corpus whose items are all singletons") {
    std::vector<std::pair<std::string, std::string>> inter, prod;
    for (int k = 0; k < 12; ++k) {
      inter.emplace_back("a", "i" + std::to_string(k));
      prod.emplace_back("i" + std::to_string(k), "a");
    }
    const auto d = make_dataset(inter, prod);
    try {
      filter_inactive(d, {10, false});
      FAIL("expected EmptyAfterFilter");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kEmptyAfterFilter);
    }
  }

  SUBCASE("threshold one is the identity") {
    std::mt19937_64 rng(5);
    const auto d = random_dataset(rng, 20, 30, 0.2, 1);
    const auto f = filter_inactive(d, {1, false});
    CHECK(f.users.tokens() == d.users.tokens());
    CHECK(f.items.tokens() == d.items.tokens());
    CHECK(f.positives == d.positives);
    CHECK(f.producer_of == d.producer_of);
  }

  SUBCASE("chain corpus: fixpoint removes more users than a single pass") {
    // u3 drops in the user pass, which starves b and c, which leaves u1 and u2
    // with one item each.
    const auto d = make_dataset({{"u1", "a"}, {"u1", "b"}, {"u2", "a"}, {"u2", "c"}, {"u3", "c"},
                                 {"u4", "d"}, {"u4", "e"}, {"u5", "d"}, {"u5", "e"}},
                                {{"a", "u4"}, {"b", "u4"}, {"c", "u4"}, {"d", "u4"}, {"e", "u4"}});
    const auto once = filter_inactive(d, {2, false});
    const auto fix = filter_inactive(d, {2, true});
    const auto pairs = cprec::testing::token_pairs(d);
    CHECK(cprec::testing::token_pairs(once) == cprec::testing::oracle_filter(pairs, 2, false));
    CHECK(cprec::testing::token_pairs(fix) == cprec::testing::oracle_filter(pairs, 2, true));
    CHECK(once.n_users() == 4);
    CHECK(fix.n_users() == 2);
    fix.validate();
  }

  SUBCASE("random corpora agree with the brute-force oracle; fixpoint output is stable") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
      const auto d = random_dataset(rng, 25, 25, 0.25);
      const auto pairs = cprec::testing::token_pairs(d);
      for (bool fixpoint : {false, true}) {
        const auto expected = cprec::testing::oracle_filter(pairs, 4, fixpoint);
        if (expected.empty()) {
          CHECK_THROWS_AS(filter_inactive(d, {4, fixpoint}), Error);
          continue;
        }
        const auto f = filter_inactive(d, {4, fixpoint});
        f.validate();
        CHECK(cprec::testing::token_pairs(f) == expected);
        // Producers of retained items stay even without positives.
        for (ItemId i = 0; i < f.n_items(); ++i) {
          CHECK(f.users.token(f.producer_of[i]) == d.users.token(d.producer_of[*d.items.find(f.items.token(i))]));
        }
        if (fixpoint) {
          const auto again = filter_inactive(f, {4, true});
          CHECK(again.positives == f.positives);
          CHECK(again.users.tokens() == f.users.tokens());
          for (const auto& p : f.positives) CHECK((p.empty() || p.size() >= 4));
        }
      }
    }
  }

  SUBCASE("invalid threshold") {
    const auto d = make_dataset({{"a", "x"}}, {{"x", "a"}});
    CHECK_THROWS_AS(filter_inactive(d, {0, false}), std::invalid_argument);
  }
}

TEST_CASE("role_partition") {
  SUBCASE("disjoint roles") {
    const auto d = make_dataset({{"a", "x"}}, {{"x", "b"}});
    const auto r = role_partition(d);
    CHECK(r.consumers == std::vector<UserId>{0});
    CHECK(r.producers == std::vector<UserId>{1});
    CHECK(r.prosumers.empty());
    CHECK(corpus_stats(d).prosumer_ratio == 0.0);
  }
  SUBCASE("everyone is a prosumer") {
    const auto d = make_dataset({{"a", "x"}, {"b", "y"}}, {{"x", "b"}, {"y", "a"}});
    CHECK(corpus_stats(d).prosumer_ratio == 1.0);
  }
}

TEST_CASE("split_leave_one_out") {
  SUBCASE("three positives are forced to sizes (1,1,1)") {
    const auto d = make_dataset({{"a", "x"}, {"a", "y"}, {"a", "z"}}, {{"x", "a"}, {"y", "a"}, {"z", "a"}});
    const auto s = split_leave_one_out(d, 9);
    CHECK(s.train[0].size() == 1);
    REQUIRE(s.val[0]);
    REQUIRE(s.test[0]);
    std::set<ItemId> all{s.train[0][0], *s.val[0], *s.test[0]};
    CHECK(all.size() == 3);
  }
  SUBCASE("two positives stay in train") {
    const auto d = make_dataset({{"a", "x"}, {"a", "y"}}, {{"x", "a"}, {"y", "a"}});
    const auto s = split_leave_one_out(d, 9);
    CHECK(s.train[0].size() == 2);
    CHECK_FALSE(s.val[0]);
    CHECK_FALSE(s.test[0]);
  }
  SUBCASE("same seed gives the same split; partition property over seeds") {
    std::mt19937_64 rng(2);
    const auto d = random_dataset(rng, 40, 30, 0.2);
    CHECK(split_leave_one_out(d, 77) == split_leave_one_out(d, 77));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto s = split_leave_one_out(d, seed);
      for (UserId u = 0; u < d.n_users(); ++u) {
        std::vector<ItemId> merged = s.train[u];
        if (s.val[u]) merged.push_back(*s.val[u]);
        if (s.test[u]) merged.push_back(*s.test[u]);
        std::sort(merged.begin(), merged.end());
        CHECK(merged == d.positives[u]);
        CHECK(s.val[u].has_value() == (d.positives[u].size() >= 3));
        CHECK(s.test[u].has_value() == (d.positives[u].size() >= 3));
      }
    }
  }
}

TEST_CASE("corpus_stats") {
  SUBCASE("one producer for four items") {
    const auto d = make_dataset({{"a", "w"}, {"a", "x"}, {"a", "y"}, {"a", "z"}},
                                {{"w", "p"}, {"x", "p"}, {"y", "p"}, {"z", "p"}});
    const auto st = corpus_stats(d);
    CHECK(st.per_user[0].distinct_producers == 1);
    CHECK(st.per_user[0].items == 4);
  }
  SUBCASE("N distinct producers lie on the diagonal") {
    const auto d = make_dataset({{"a", "w"}, {"a", "x"}, {"a", "y"}}, {{"w", "p"}, {"x", "q"}, {"y", "a"}});
    const auto st = corpus_stats(d);
    CHECK(st.per_user[0].distinct_producers == st.per_user[0].items);
  }
  SUBCASE("ratios agree with a set-based oracle") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 25; ++trial) {
      const auto d = random_dataset(rng, 1 + trial * 3, 20, 0.1);
      std::set<UserId> consumers, producers;
      for (UserId u = 0; u < d.n_users(); ++u) {
        if (!d.positives[u].empty()) consumers.insert(u);
      }
      for (auto p : d.producer_of) producers.insert(p);
      std::set<UserId> both;
      std::set_intersection(consumers.begin(), consumers.end(), producers.begin(), producers.end(),
                            std::inserter(both, both.begin()));
      const auto st = corpus_stats(d);
      const double n = static_cast<double>(d.n_users());
      CHECK(st.consumer_ratio == static_cast<double>(consumers.size()) / n);
      CHECK(st.producer_ratio == static_cast<double>(producers.size()) / n);
      CHECK(st.prosumer_ratio == static_cast<double>(both.size()) / n);
      CHECK(st.prosumer_ratio <= std::min(st.consumer_ratio, st.producer_ratio));
      for (const auto& pt : st.per_user) CHECK(pt.distinct_producers <= pt.items);
    }
  }
}

TEST_CASE("prepared directory round trip") {
  std::mt19937_64 rng(4);
  const auto d = random_dataset(rng, 30, 25, 0.2);
  const auto s = split_leave_one_out(d, 13);
  const auto dir = temp_dir("prepared");
  write_prepared(dir, d, s, {3, true});
  const auto back = read_prepared(dir);
  CHECK(back.split == s);
  CHECK(back.dataset.positives == d.positives);
  CHECK(back.dataset.producer_of == d.producer_of);
  CHECK(back.dataset.users.tokens() == d.users.tokens());
  CHECK(back.dataset.items.tokens() == d.items.tokens());
  CHECK(back.filter.min_actions == 3);
  CHECK(back.filter.iterate_to_fixpoint);
}
