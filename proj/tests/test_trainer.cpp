#include <doctest.h>

#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "cprec/eval.hpp"
#include "cprec/synthetic.hpp"
#include "cprec/trainer.hpp"
#include "test_support.hpp"

using namespace cprec;
using cprec::testing::make_dataset;
using cprec::testing::random_instance;
using cprec::testing::randomize;

namespace {

const std::vector<ModelKind> kTrainable = {ModelKind::kBprMf, ModelKind::kFm, ModelKind::kVista, ModelKind::kCPRec};

}  // namespace

TEST_CASE("sampler support and validity") {
  SUBCASE("single user, single positive") {
    const auto d = make_dataset({{"a", "x"}}, {{"x", "a"}, {"y", "a"}, {"z", "a"}});
    // Only x is interacted, so widen the item set by hand.
    Dataset wide = d;
    wide.items.intern("y");
    wide.items.intern("z");
    wide.producer_of = {0, 0, 0};
    const auto split = split_leave_one_out(wide, 0);
    TripleSampler sampler(split, wide.positives, wide.n_items());
    std::mt19937_64 rng(1);
    for (const auto& t : sampler.sample(2000, rng)) {
      CHECK(t.u == 0);
      CHECK(t.i == 0);
      CHECK((t.j == 1 || t.j == 2));
    }
  }

  SUBCASE("a million triples never violate the defining property") {
    std::mt19937_64 rng(3);
    const auto d = cprec::testing::random_dataset(rng, 50, 60, 0.15, 3);
    const auto split = split_leave_one_out(d, 5);
    TripleSampler sampler(split, d.positives, d.n_items());
    std::size_t violations = 0;
    std::vector<Triple> buf(10000);
    for (int round = 0; round < 100; ++round) {
      sampler.sample_into(buf, rng);
      for (const auto& t : buf) {
        const auto& tr = split.train[t.u];
        if (!std::binary_search(tr.begin(), tr.end(), t.i)) ++violations;
        if (d.is_positive(t.u, t.j)) ++violations;
      }
    }
    CHECK(violations == 0);
  }

  SUBCASE("negatives are uniform over valid items (chi-square)") {
    // One user with positives {0, 3, 7} on a ten-item corpus: 7 valid negatives.
    Dataset d;
    d.users.intern("a");
    for (int i = 0; i < 10; ++i) d.items.intern(std::to_string(i));
    d.positives = {{0, 3, 7}};
    d.producer_of.assign(10, 0);
    Split split;
    split.train = {{0, 3, 7}};
    split.val = {std::nullopt};
    split.test = {std::nullopt};
    TripleSampler sampler(split, d.positives, d.n_items());
    std::mt19937_64 rng(12);
    std::vector<double> counts(10);
    const std::size_t n = 100000;
    for (const auto& t : sampler.sample(n, rng)) counts[t.j] += 1.0;
    CHECK(counts[0] == 0.0);
    CHECK(counts[3] == 0.0);
    CHECK(counts[7] == 0.0);
    const double expected = static_cast<double>(n) / 7.0;
    double chi2 = 0.0;
    for (int j = 0; j < 10; ++j) {
      if (j == 0 || j == 3 || j == 7) continue;
      chi2 += (counts[j] - expected) * (counts[j] - expected) / expected;
    }
    // 6 degrees of freedom, upper 0.1% quantile.
    CHECK(chi2 < 22.458);
  }

  SUBCASE("starved sampler") {
    Dataset d;
    d.users.intern("a");
    d.items.intern("x");
    d.items.intern("y");
    d.positives = {{0, 1}};
    d.producer_of = {0, 0};
    Split split;
    split.train = {{0, 1}};
    split.val = {std::nullopt};
    split.test = {std::nullopt};
    TripleSampler sampler(split, d.positives, d.n_items());
    std::mt19937_64 rng(0);
    try {
      sampler.sample(rng);
      FAIL("expected SamplerStarved");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kSamplerStarved);
    }
  }
}

TEST_CASE("bpr_loss") {
  std::mt19937_64 rng(44);
  SUBCASE("equal scores cost ln 2 per triple") {
    for (ModelKind kind : kTrainable) {
      auto inst = random_instance(kind, 3, 4, rng);
      for (Matrix* t : mutable_tensors(inst.params)) t->fill(0.0);
      CHECK(bpr_loss(inst.params, inst.batch, inst.producer_of, 0.0) == doctest::Approx(std::log(2.0)));
    }
  }
  SUBCASE("huge margin leaves only the regularizer") {
    auto inst = random_instance(ModelKind::kBprMf, 3, 1, rng);
    auto& p = std::get<BprMfParams>(inst.params);
    p.item_bias(inst.batch[0].i, 0) = 700.0;
    p.item_bias(inst.batch[0].j, 0) = -700.0;
    const double with_reg = bpr_loss(inst.params, inst.batch, inst.producer_of, 0.3);
    const double reg_only = with_reg - bpr_loss(inst.params, inst.batch, inst.producer_of, 0.0);
    CHECK(bpr_loss(inst.params, inst.batch, inst.producer_of, 0.0) < 1e-12);
    CHECK(with_reg == doctest::Approx(reg_only));
    // And the opposite direction stays finite.
    std::swap(inst.batch[0].i, inst.batch[0].j);
    CHECK(std::isfinite(bpr_loss(inst.params, inst.batch, inst.producer_of, 0.0)));
  }
  SUBCASE("matches the scalar oracle for every model") {
    for (ModelKind kind : kTrainable) {
      for (int trial = 0; trial < 10; ++trial) {
        auto inst = random_instance(kind, 4, 3, rng);
        const double lambda = 0.05 * trial;
        const double expected = cprec::testing::oracle_bpr_loss(inst.params, inst.batch, inst.producer_of, lambda);
        CHECK(bpr_loss(inst.params, inst.batch, inst.producer_of, lambda) ==
              doctest::Approx(expected).epsilon(1e-10));
      }
    }
  }
  SUBCASE("a row is charged once per batch however often it is referenced") {
    for (ModelKind kind : kTrainable) {
      auto inst = random_instance(kind, 4, 5, rng);
      auto doubled = inst.batch;
      doubled.insert(doubled.end(), inst.batch.begin(), inst.batch.end());
      const auto reg = [&](const std::vector<Triple>& b) {
        return bpr_loss(inst.params, b, inst.producer_of, 0.2) - bpr_loss(inst.params, b, inst.producer_of, 0.0);
      };
      CHECK(reg(doubled) == doctest::Approx(reg(inst.batch) / 2.0).epsilon(1e-12));
      CHECK(bpr_loss(inst.params, doubled, inst.producer_of, 0.0) ==
            doctest::Approx(bpr_loss(inst.params, inst.batch, inst.producer_of, 0.0)).epsilon(1e-12));
    }
  }
  SUBCASE("non-decreasing in lambda") {
    for (ModelKind kind : kTrainable) {
      auto inst = random_instance(kind, 4, 6, rng);
      double prev = -1.0;
      for (double lambda : {0.0, 0.001, 0.01, 0.1, 1.0, 10.0}) {
        const double loss = bpr_loss(inst.params, inst.batch, inst.producer_of, lambda);
        CHECK(loss >= prev);
        prev = loss;
      }
    }
  }
  SUBCASE("neg_log_sigmoid is stable") {
    CHECK(neg_log_sigmoid(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(neg_log_sigmoid(700.0) >= 0.0);
    CHECK(neg_log_sigmoid(-700.0) == doctest::Approx(700.0));
    CHECK(std::isfinite(neg_log_sigmoid(-1e6)));
  }
}

TEST_CASE("analytic gradients agree with central finite differences") {
  std::mt19937_64 rng(2024);
  for (ModelKind kind : kTrainable) {
    for (std::size_t k : {2, 4, 8}) {
      for (int trial = 0; trial < 5; ++trial) {
        auto inst = random_instance(kind, k, 5, rng);
        const double lambda = std::uniform_real_distribution<double>(0.0, 0.5)(rng);
        const auto check = cprec::testing::finite_difference_check(inst.params, inst.batch, inst.producer_of, lambda);
        INFO(to_string(kind), " K=", k, " worst=", check.worst_abs);
        CHECK(check.failures == 0);
      }
    }
  }
}

TEST_CASE("gradient special cases") {
  SUBCASE("twin items receive opposite gradients") {
    auto params = init_params(ModelKind::kCPRec, 2, 3, 4, 7);
    auto& p = std::get<CPRecParams>(params);
    for (std::size_t k = 0; k < 4; ++k) p.item_emb(2, k) = p.item_emb(1, k);
    const std::vector<UserId> producers = {0, 1, 1};
    const std::vector<Triple> batch = {{0, 1, 2}};
    const auto g = std::get<CPRecParams>(bpr_gradients(params, batch, producers, 0.0));
    for (std::size_t k = 0; k < 4; ++k) CHECK(g.item_emb(1, k) == -g.item_emb(2, k));
    CHECK(g.item_bias(1, 0) == -g.item_bias(2, 0));
  }
  SUBCASE("self-produced positive feeds both role pathways") {
    std::mt19937_64 rng(6);
    auto params = init_params(ModelKind::kCPRec, 3, 4, 4, 1);
    randomize(params, rng);
    const std::vector<UserId> producers = {0, 1, 2, 1};
    const std::vector<Triple> batch = {{0, 0, 1}, {0, 0, 3}};
    const auto check = cprec::testing::finite_difference_check(params, batch, producers, 0.1);
    CHECK(check.failures == 0);
    const auto g = std::get<CPRecParams>(bpr_gradients(params, batch, producers, 0.0));
    double norm = 0.0;
    for (std::size_t k = 0; k < 4; ++k) norm += std::abs(g.core_emb(0, k));
    CHECK(norm > 0.0);
  }
  SUBCASE("a per-user score shift changes neither loss nor gradient") {
    std::mt19937_64 rng(10);
    auto inst = random_instance(ModelKind::kFm, 4, 6, rng);
    const double before = bpr_loss(inst.params, inst.batch, inst.producer_of, 0.1);
    const auto g_before = bpr_gradients(inst.params, inst.batch, inst.producer_of, 0.1);
    auto& fm = std::get<FmParams>(inst.params);
    for (double& b : fm.user_bias.values()) b += 3.0;
    CHECK(bpr_loss(inst.params, inst.batch, inst.producer_of, 0.1) == doctest::Approx(before).epsilon(1e-12));
    const auto g_after = bpr_gradients(inst.params, inst.batch, inst.producer_of, 0.1);
    const auto a = named_tensors(g_before), b = named_tensors(g_after);
    for (std::size_t t = 0; t < a.size(); ++t) {
      for (std::size_t k = 0; k < a[t].second->size(); ++k) {
        CHECK(a[t].second->values()[k] == doctest::Approx(b[t].second->values()[k]).epsilon(1e-12));
      }
    }
  }
  SUBCASE("untouched rows have zero gradient") {
    auto params = init_params(ModelKind::kBprMf, 3, 5, 2, 1);
    const std::vector<UserId> producers(5, 0);
    const auto g = std::get<BprMfParams>(bpr_gradients(params, std::vector<Triple>{{0, 1, 2}}, producers, 0.5));
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(g.user_emb(1, k) == 0.0);
      CHECK(g.item_emb(4, k) == 0.0);
    }
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    auto params = init_params(ModelKind::kCPRec, 3, 3, 2, 1);
    const auto before = params;
    auto state = AdamState::for_params(params);
    adam_step(params, zeros_like(params), state, 0.01);
    CHECK(params == before);
    CHECK(state.t == 1);
  }
  SUBCASE("first step moves by lr in the sign of the gradient") {
    for (double g : {1e-3, -0.5, 3.0, -1e4}) {
      std::vector<double> theta{0.0}, m{0.0}, v{0.0};
      const std::vector<double> grad{g};
      adam_update(theta, grad, m, v, 1, 0.01, {});
      CHECK(theta[0] == doctest::Approx(-0.01 * (g > 0 ? 1.0 : -1.0)).epsilon(1e-6));
    }
  }
  SUBCASE("quadratic bowl") {
    std::vector<double> theta{1.0, -2.0, 0.5}, m(3), v(3), grad(3);
    auto norm = [&] { return std::sqrt(theta[0] * theta[0] + theta[1] * theta[1] + theta[2] * theta[2]); };
    const double start = norm();
    // Scalar re-simulation of the textbook update, coordinate by coordinate.
    std::array<double, 3> ref{1.0, -2.0, 0.5}, rm{}, rv{};
    double prev = start;
    bool approaching = true;
    for (int t = 1; t <= 100; ++t) {
      for (int k = 0; k < 3; ++k) grad[k] = 2.0 * theta[k];
      adam_update(theta, grad, m, v, t, 0.1, {});
      for (int k = 0; k < 3; ++k) {
        const double g = 2.0 * ref[k];
        rm[k] = 0.9 * rm[k] + 0.1 * g;
        rv[k] = 0.999 * rv[k] + 0.001 * g * g;
        const double mhat = rm[k] / (1.0 - std::pow(0.9, t));
        const double vhat = rv[k] / (1.0 - std::pow(0.999, t));
        ref[k] -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
        CHECK(theta[k] == doctest::Approx(ref[k]).epsilon(1e-12));
      }
      // Strictly decreasing on the approach; constant-lr Adam then rings around the minimum.
      if (approaching && t > 3) CHECK(norm() < prev);
      if (norm() < 0.1 * start) approaching = false;
      prev = norm();
    }
    CHECK(norm() < 0.01 * start);
  }
}

TEST_CASE("train") {
  SynthConfig sc;
  sc.n_users = 150;
  sc.n_items_per_producer = 4;
  sc.mean_actions = 12;
  sc.seed = 3;
  const auto d = generate_synthetic(sc);
  const auto split = split_leave_one_out(d, 1);
  TrainConfig cfg;
  cfg.k = 8;
  cfg.batch_size = 256;
  cfg.lambda = 0.001;
  cfg.max_epochs = 5;
  cfg.threads = 1;

  SUBCASE("zero epochs returns the initialization") {
    cfg.max_epochs = 0;
    const auto r = train(d, split, ModelKind::kCPRec, cfg);
    CHECK(r.report.epochs.empty());
    CHECK_FALSE(r.report.best_epoch);
    CHECK(r.params == init_params(ModelKind::kCPRec, d.n_users(), d.n_items(), 8, cfg.seed));
  }
  SUBCASE("deterministic and loss decreases for five epochs") {
    for (ModelKind kind : kTrainable) {
      const auto a = train(d, split, kind, cfg);
      const auto b = train(d, split, kind, cfg);
      CHECK(a.params == b.params);
      CHECK(a.report.to_csv(false) == b.report.to_csv(false));
      REQUIRE(a.report.epochs.size() == 5);
      for (std::size_t e = 1; e < 5; ++e) CHECK(a.report.epochs[e].loss < a.report.epochs[e - 1].loss);
      REQUIRE(a.report.best_epoch);
      for (const auto& e : a.report.epochs) CHECK(e.val_auc <= a.report.epochs[*a.report.best_epoch - 1].val_auc);
    }
  }
  SUBCASE("poprec counts the training split") {
    const auto r = train(d, split, ModelKind::kPopRec, cfg);
    CHECK(r.report.epochs.empty());
    CHECK(std::get<PopRecParams>(r.params).popularity == fit_poprec(split.train, d.n_items()).popularity);
  }
  SUBCASE("exploding learning rate aborts with the epoch") {
    cfg.learning_rate = 1e300;
    try {
      train(d, split, ModelKind::kBprMf, cfg);
      FAIL("expected NonFiniteLoss");
    } catch (const NonFiniteLoss& e) {
      CHECK(e.epoch() >= 1);
    }
  }
}

TEST_CASE("grid_search") {
  SynthConfig sc;
  sc.n_users = 80;
  sc.n_items_per_producer = 3;
  sc.mean_actions = 10;
  const auto d = generate_synthetic(sc);
  const auto split = split_leave_one_out(d, 2);
  TrainConfig cfg;
  cfg.k = 4;
  cfg.batch_size = 128;
  cfg.max_epochs = 2;
  cfg.threads = 1;

  SUBCASE("a single value is selected") {
    const std::vector<double> grid = {0.05};
    const auto r = grid_search(d, split, ModelKind::kBprMf, cfg, grid);
    CHECK(r.best_lambda == 0.05);
    CHECK(r.cells.size() == 1);
    CHECK(r.best_params.has_value());
  }
  SUBCASE("ties go to the larger lambda") {
    // PopRec ignores lambda, so every cell ties.
    const std::vector<double> grid = {0.001, 1.0, 0.1};
    const auto r = grid_search(d, split, ModelKind::kPopRec, cfg, grid);
    CHECK(r.best_lambda == 1.0);
  }
}
