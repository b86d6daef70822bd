#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cprec/dataset.hpp"
#include "cprec/models.hpp"

namespace cprec {

struct Triple {
  UserId u = 0;
  ItemId i = 0;  // observed (train)
  ItemId j = 0;  // unobserved in train, val and test

  friend bool operator==(const Triple&, const Triple&) = default;
};

/// Draws BPR triples: user uniform over users with train positives, positive
/// uniform over that user's train items, negative uniform over all items by
/// rejection against the user's full positive set.
class TripleSampler {
 public:
  static constexpr std::size_t kMaxRejections = 100;

  /// `positives` are the full per-user sets (train + val + test), sorted.
  TripleSampler(const Split& split, std::span<const std::vector<ItemId>> positives, std::size_t n_items);

  Triple sample(std::mt19937_64& rng) const;
  std::vector<Triple> sample(std::size_t n, std::mt19937_64& rng) const;
  void sample_into(std::span<Triple> out, std::mt19937_64& rng) const;

  std::size_t n_active_users() const { return users_.size(); }

 private:
  const Split& split_;
  std::span<const std::vector<ItemId>> positives_;
  std::size_t n_items_;
  std::vector<UserId> users_;
};

/// (sum of softplus(-(x_ui - x_uj)) + lambda * sum of ||row||^2) / batch size,
/// where the penalty runs over the distinct embedding rows the batch touches.
/// Biases are not regularized.
double bpr_loss(const ModelParams& params, std::span<const Triple> batch, std::span<const UserId> producer_of,
                double lambda);

/// Analytic gradient of bpr_loss. Returns a store shaped like `params`.
ModelParams bpr_gradients(const ModelParams& params, std::span<const Triple> batch,
                          std::span<const UserId> producer_of, double lambda);

/// Fused variant that overwrites `grads` and returns the loss.
double bpr_loss_and_gradients(const ModelParams& params, std::span<const Triple> batch,
                              std::span<const UserId> producer_of, double lambda, ModelParams& grads);

/// Numerically stable -ln(sigmoid(x)).
double neg_log_sigmoid(double x);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::int64_t t = 0;
  AdamOptions options;

  static AdamState for_params(const ModelParams& params, AdamOptions options = {});
};

/// One bias-corrected Adam update over flat buffers; `t` is the step index after increment.
void adam_update(std::span<double> theta, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::int64_t t, double learning_rate, const AdamOptions& options);

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double learning_rate);

struct TrainConfig {
  std::size_t k = 20;
  double lambda = 0.01;
  double learning_rate = 0.01;
  std::size_t batch_size = 10000;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  std::uint64_t seed = 42;
  // Validation negatives per user; 0 ranks against every candidate.
  std::size_t val_negatives = 0;
  std::size_t threads = 0;
  ProjectionInit projection_init = ProjectionInit::kNearIdentity;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double val_auc = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::optional<std::size_t> best_epoch;

  /// `epoch,loss,val_auc,seconds` rows with a header line.
  std::string to_csv(bool include_seconds = true) const;
};

struct TrainResult {
  ModelParams params;
  TrainReport report;
};

/// Trains with BPR + Adam and returns the parameters of the best validation
/// epoch. PopRec is fitted by counting and yields an empty report.
TrainResult train(const Dataset& dataset, const Split& split, ModelKind kind, const TrainConfig& config);

struct GridCell {
  double lambda = 0.0;
  double val_auc = 0.0;
  TrainReport report;
  std::string error;  // non-empty when training failed
};

struct GridSearchResult {
  std::optional<double> best_lambda;
  std::vector<GridCell> cells;
  std::optional<ModelParams> best_params;
};

inline constexpr double kGridTieTolerance = 1e-9;

/// Trains once per lambda and keeps the best validation AUC; near-ties go to the larger lambda.
GridSearchResult grid_search(const Dataset& dataset, const Split& split, ModelKind kind,
                             const TrainConfig& base_config, std::span<const double> lambda_grid);

}  // namespace cprec
