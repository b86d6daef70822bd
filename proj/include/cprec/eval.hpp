#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cprec/dataset.hpp"
#include "cprec/models.hpp"
#include "cprec/trainer.hpp"

namespace cprec {

enum class EvalTarget { kTest, kValidation };

struct EvalOptions {
  // Users with fewer training positives than this form the cold slice.
  std::size_t cold_threshold = 5;
  // 0 = exact. Otherwise that many distinct negatives per user, or all of them if fewer exist.
  std::size_t sampled_negatives = 0;
  // Count ties as 0.5 instead of 0.
  bool ties_half = false;
  EvalTarget target = EvalTarget::kTest;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  bool keep_per_user = false;
};

struct UserAuc {
  UserId user = 0;
  double auc = 0.0;
  bool cold = false;
};

/// Macro-averaged AUC. Empty slices report NaN.
struct EvalReport {
  double auc_all = 0.0;
  double auc_cold = 0.0;
  std::size_t n_eval_users = 0;
  std::size_t n_cold_users = 0;
  std::size_t n_without_target = 0;
  std::string mode;  // "exact" or "sampled(n)"
  std::vector<UserAuc> per_user;

  /// Header `slice,auc,n_users`, then the `all` and `cold` rows.
  std::string to_text() const;
  /// `user<TAB>auc<TAB>cold` per evaluated user.
  std::string per_user_tsv(const Dataset& d) const;
};

EvalReport evaluate_auc(const Scorer& scorer, const Dataset& dataset, const Split& split, const EvalOptions& options);
EvalReport evaluate_auc(const ModelParams& params, const Dataset& dataset, const Split& split,
                        const EvalOptions& options);

/// Neumaier-compensated sum.
double compensated_sum(std::span<const double> values);

struct SweepRow {
  ModelKind model = ModelKind::kCPRec;
  std::size_t k = 0;
  double lambda = 0.0;
  double auc_all = 0.0;
  double auc_cold = 0.0;
  std::string error;
};

/// Trains and tests every (model, K) cell with the same seeds. With a non-empty
/// lambda grid each cell is grid-searched on validation first.
std::vector<SweepRow> k_sweep(const Dataset& dataset, const Split& split, std::span<const ModelKind> models,
                              std::span<const std::size_t> k_list, const TrainConfig& base_config,
                              std::span<const double> lambda_grid = {}, const EvalOptions& eval = {});

/// `model,K,auc_all,auc_cold`; failed cells get nan and a trailing `# failed:` comment.
std::string sweep_to_csv(std::span<const SweepRow> rows);

}  // namespace cprec
