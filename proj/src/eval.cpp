#include "cprec/eval.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "cprec/parallel.hpp"
#include "cprec/text_io.hpp"

namespace cprec {

double compensated_sum(std::span<const double> values) {
  double sum = 0.0;
  double carry = 0.0;
  for (double v : values) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      carry += (sum - t) + v;
    } else {
      carry += (v - t) + sum;
    }
    sum = t;
  }
  return sum + carry;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Candidate {
  UserId user;
  ItemId target;
};

double mean_or_nan(std::span<const double> values) {
  if (values.empty()) return kNaN;
  return compensated_sum(values) / static_cast<double>(values.size());
}

}  // namespace

EvalReport evaluate_auc(const Scorer& scorer, const Dataset& dataset, const Split& split, const EvalOptions& options) {
  EvalReport report;
  report.mode = options.sampled_negatives == 0 ? "exact" : "sampled(" + std::to_string(options.sampled_negatives) + ")";
  const std::size_t n_items = dataset.n_items();
  if (scorer.n_items() != n_items) {
    throw Error(ErrorCode::kDimensionMismatch, "model item count " + std::to_string(scorer.n_items()) +
                                                   " differs from dataset item count " + std::to_string(n_items));
  }

  const auto& targets = options.target == EvalTarget::kTest ? split.test : split.val;
  std::vector<Candidate> users;
  for (UserId u = 0; u < split.n_users(); ++u) {
    if (targets[u]) {
      users.push_back({u, *targets[u]});
    } else {
      ++report.n_without_target;
    }
  }

  std::vector<double> auc(users.size());
  parallel_for(users.size(), options.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> scores;
    std::vector<ItemId> pool;
    for (std::size_t k = begin; k < end; ++k) {
      const auto [u, target] = users[k];
      const auto& pos = dataset.positives[u];
      const std::size_t n_candidates = n_items - pos.size();
      if (n_candidates == 0) {
        throw Error(ErrorCode::kEmptyCandidateSet, "user " + dataset.users.token(u) + " has no unobserved items");
      }
      const double target_score = scorer.score(u, target);
      std::size_t wins = 0;
      std::size_t ties = 0;
      auto tally = [&](double s) {
        if (target_score > s) {
          ++wins;
        } else if (target_score == s) {
          ++ties;
        }
      };

      std::size_t denominator = n_candidates;
      if (options.sampled_negatives == 0 || options.sampled_negatives >= n_candidates) {
        scores.resize(n_items);
        scorer.score_all(u, scores);
        auto next_pos = pos.begin();
        for (ItemId j = 0; j < n_items; ++j) {
          if (next_pos != pos.end() && *next_pos == j) {
            ++next_pos;
            continue;
          }
          tally(scores[j]);
        }
      } else {
        pool.clear();
        auto next_pos = pos.begin();
        for (ItemId j = 0; j < n_items; ++j) {
          if (next_pos != pos.end() && *next_pos == j) {
            ++next_pos;
            continue;
          }
          pool.push_back(j);
        }
        std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                          static_cast<std::uint32_t>(u)};
        std::mt19937_64 rng(seq);
        const std::size_t n = options.sampled_negatives;
        for (std::size_t s = 0; s < n; ++s) {
          const auto pick = std::uniform_int_distribution<std::size_t>(s, pool.size() - 1)(rng);
          std::swap(pool[s], pool[pick]);
        }
        scores.resize(n);
        scorer.score_items(u, std::span<const ItemId>(pool.data(), n), scores);
        for (double s : scores) tally(s);
        denominator = n;
      }
      const double credit = static_cast<double>(wins) + (options.ties_half ? 0.5 * static_cast<double>(ties) : 0.0);
      auc[k] = credit / static_cast<double>(denominator);
    }
  });

  std::vector<double> cold;
  for (std::size_t k = 0; k < users.size(); ++k) {
    const bool is_cold = split.train[users[k].user].size() < options.cold_threshold;
    if (is_cold) cold.push_back(auc[k]);
    if (options.keep_per_user) report.per_user.push_back({users[k].user, auc[k], is_cold});
  }
  report.n_eval_users = users.size();
  report.n_cold_users = cold.size();
  report.auc_all = mean_or_nan(auc);
  report.auc_cold = mean_or_nan(cold);
  return report;
}

EvalReport evaluate_auc(const ModelParams& params, const Dataset& dataset, const Split& split,
                        const EvalOptions& options) {
  const Scorer scorer(params, dataset.producer_of);
  return evaluate_auc(scorer, dataset, split, options);
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  out << "slice,auc,n_users\n";
  out << "all," << format_double(auc_all) << ',' << n_eval_users << '\n';
  out << "cold," << format_double(auc_cold) << ',' << n_cold_users << '\n';
  return out.str();
}

std::string EvalReport::per_user_tsv(const Dataset& d) const {
  std::ostringstream out;
  for (const auto& r : per_user) {
    out << d.users.token(r.user) << '\t' << format_double(r.auc) << '\t' << (r.cold ? 1 : 0) << '\n';
  }
  return out.str();
}

std::vector<SweepRow> k_sweep(const Dataset& dataset, const Split& split, std::span<const ModelKind> models,
                              std::span<const std::size_t> k_list, const TrainConfig& base_config,
                              std::span<const double> lambda_grid, const EvalOptions& eval) {
  if (k_list.empty()) throw std::invalid_argument("empty K list");
  std::vector<SweepRow> rows;
  for (ModelKind model : models) {
    for (std::size_t k : k_list) {
      SweepRow row;
      row.model = model;
      row.k = k;
      row.lambda = base_config.lambda;
      try {
        TrainConfig config = base_config;
        config.k = k;
        ModelParams params;
        if (lambda_grid.empty()) {
          params = train(dataset, split, model, config).params;
        } else {
          auto grid = grid_search(dataset, split, model, config, lambda_grid);
          if (!grid.best_lambda) {
            std::string why = "every lambda failed";
            if (!grid.cells.empty()) why += ": " + grid.cells.back().error;
            throw std::runtime_error(why);
          }
          row.lambda = *grid.best_lambda;
          params = std::move(*grid.best_params);
        }
        EvalOptions test = eval;
        test.target = EvalTarget::kTest;
        const auto report = evaluate_auc(params, dataset, split, test);
        row.auc_all = report.auc_all;
        row.auc_cold = report.auc_cold;
      } catch (const std::exception& e) {
        row.auc_all = kNaN;
        row.auc_cold = kNaN;
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string sweep_to_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "model,K,auc_all,auc_cold\n";
  for (const auto& r : rows) {
    out << to_string(r.model) << ',' << r.k << ',' << format_double(r.auc_all) << ',' << format_double(r.auc_cold)
        << '\n';
  }
  for (const auto& r : rows) {
    if (!r.error.empty()) out << "# failed: " << to_string(r.model) << " K=" << r.k << ": " << r.error << '\n';
  }
  return out.str();
}

}  // namespace cprec
