#include <doctest.h>

#include <algorithm>
#include <random>

#include "cprec/synthetic.hpp"

using namespace cprec;

namespace {

// Mean distinct-producers / items over consumers, with producer_of supplied.
double concentration(const Dataset& d, const std::vector<UserId>& producer_of) {
  double sum = 0.0;
  std::size_t n = 0;
  std::vector<UserId> owners;
  for (const auto& pos : d.positives) {
    if (pos.empty()) continue;
    owners.clear();
    for (auto i : pos) owners.push_back(producer_of[i]);
    std::sort(owners.begin(), owners.end());
    const auto distinct = std::unique(owners.begin(), owners.end()) - owners.begin();
    sum += static_cast<double>(distinct) / static_cast<double>(pos.size());
    ++n;
  }
  return sum / static_cast<double>(n);
}

// Fraction of producer-label shuffles whose concentration is at most the observed one.
double permutation_p_value(const Dataset& d, int rounds, std::uint64_t seed) {
  const double observed = concentration(d, d.producer_of);
  std::mt19937_64 rng(seed);
  auto shuffled = d.producer_of;
  int at_most = 0;
  for (int r = 0; r < rounds; ++r) {
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    if (concentration(d, shuffled) <= observed) ++at_most;
  }
  return static_cast<double>(at_most + 1) / static_cast<double>(rounds + 1);
}

}  // namespace

TEST_CASE("same seed gives a byte-identical corpus") {
  SynthConfig c;
  c.n_users = 100;
  const auto a = generate_synthetic_corpus(c);
  const auto b = generate_synthetic_corpus(c);
  REQUIRE(a.interactions.size() == b.interactions.size());
  for (std::size_t k = 0; k < a.interactions.size(); ++k) {
    CHECK(a.interactions[k].user_token == b.interactions[k].user_token);
    CHECK(a.interactions[k].item_token == b.interactions[k].item_token);
  }
  c.seed = 2;
  const auto other = generate_synthetic_corpus(c);
  bool differs = other.interactions.size() != a.interactions.size();
  for (std::size_t k = 0; !differs && k < a.interactions.size(); ++k) {
    differs = a.interactions[k].item_token != other.interactions[k].item_token;
  }
  CHECK(differs);
}

TEST_CASE("ownership layout") {
  SynthConfig c;
  c.n_users = 30;
  c.n_items_per_producer = 4;
  const auto corpus = generate_synthetic_corpus(c);
  CHECK(corpus.producers.size() == 120);
  CHECK(corpus.producers[7].item_token == "i7");
  CHECK(corpus.producers[7].user_token == "u1");
  const auto d = generate_synthetic(c);
  d.validate();
}

TEST_CASE("without appreciation, producer identity carries no signal") {
  SynthConfig c;
  c.n_users = 300;
  c.appreciation_weight = 0.0;
  c.seed = 5;
  const auto d = generate_synthetic(c);
  const double p = permutation_p_value(d, 200, 1);
  // Two-sided: neither unusually concentrated nor unusually spread.
  CHECK(p > 0.01);
  CHECK(p < 0.99);
}

TEST_CASE("pure appreciation concentrates consumption on few producers") {
  SynthConfig c;
  c.n_users = 300;
  c.appreciation_weight = 1.0;
  c.seed = 5;
  const auto d = generate_synthetic(c);
  CHECK(concentration(d, d.producer_of) < 0.5);
  CHECK(permutation_p_value(d, 50, 1) < 0.05);
}

TEST_CASE("invalid configuration") {
  SynthConfig c;
  c.n_users = 0;
  CHECK_THROWS_AS(generate_synthetic_corpus(c), std::invalid_argument);
  c.n_users = 5;
  c.appreciation_weight = 1.5;
  CHECK_THROWS_AS(generate_synthetic_corpus(c), std::invalid_argument);
}
