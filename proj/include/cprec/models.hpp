#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "cprec/types.hpp"

namespace cprec {

enum class ModelKind { kPopRec, kBprMf, kFm, kVista, kCPRec };

std::string_view to_string(ModelKind kind);
/// Accepts "poprec", "bpr", "bprmf", "fm", "vista", "cprec". Throws std::invalid_argument.
ModelKind parse_model_kind(std::string_view name);
inline constexpr std::array<ModelKind, 5> kAllModels = {ModelKind::kPopRec, ModelKind::kBprMf, ModelKind::kFm,
                                                        ModelKind::kVista, ModelKind::kCPRec};

// Each parameter struct lists its tensors in declared order through tensors();
// checkpoints, optimizer state and gradient stores all rely on that order.

struct PopRecParams {
  static constexpr ModelKind kKind = ModelKind::kPopRec;
  static constexpr std::array<std::string_view, 1> kNames = {"popularity"};
  Matrix popularity;  // |I| x 1, training-split interaction counts

  auto tensors() { return std::array<Matrix*, 1>{&popularity}; }
  auto tensors() const { return std::array<const Matrix*, 1>{&popularity}; }

  friend bool operator==(const PopRecParams&, const PopRecParams&) = default;
};

struct BprMfParams {
  static constexpr ModelKind kKind = ModelKind::kBprMf;
  static constexpr std::array<std::string_view, 3> kNames = {"user_emb", "item_emb", "item_bias"};
  Matrix user_emb;   // |U| x K
  Matrix item_emb;   // |I| x K
  Matrix item_bias;  // |I| x 1

  auto tensors() { return std::array<Matrix*, 3>{&user_emb, &item_emb, &item_bias}; }
  auto tensors() const { return std::array<const Matrix*, 3>{&user_emb, &item_emb, &item_bias}; }

  friend bool operator==(const BprMfParams&, const BprMfParams&) = default;
};

/// Second-order FM with the item's producer as a one-hot feature.
struct FmParams {
  static constexpr ModelKind kKind = ModelKind::kFm;
  static constexpr std::array<std::string_view, 6> kNames = {"user_emb",  "item_emb",      "producer_emb",
                                                             "item_bias", "producer_bias", "user_bias"};
  Matrix user_emb;       // |U| x K
  Matrix item_emb;       // |I| x K
  Matrix producer_emb;   // |U| x K
  Matrix item_bias;      // |I| x 1
  Matrix producer_bias;  // |U| x 1
  Matrix user_bias;      // |U| x 1, rank-inert

  auto tensors() {
    return std::array<Matrix*, 6>{&user_emb, &item_emb, &producer_emb, &item_bias, &producer_bias, &user_bias};
  }
  auto tensors() const {
    return std::array<const Matrix*, 6>{&user_emb, &item_emb, &producer_emb, &item_bias, &producer_bias, &user_bias};
  }

  friend bool operator==(const FmParams&, const FmParams&) = default;
};

/// Ownership-only Vista. user_emb2 serves both the consumer and the producer side.
struct VistaParams {
  static constexpr ModelKind kKind = ModelKind::kVista;
  static constexpr std::array<std::string_view, 4> kNames = {"user_emb1", "user_emb2", "item_emb", "item_bias"};
  Matrix user_emb1;  // |U| x K
  Matrix user_emb2;  // |U| x K
  Matrix item_emb;   // |I| x K
  Matrix item_bias;  // |I| x 1

  auto tensors() { return std::array<Matrix*, 4>{&user_emb1, &user_emb2, &item_emb, &item_bias}; }
  auto tensors() const { return std::array<const Matrix*, 4>{&user_emb1, &user_emb2, &item_emb, &item_bias}; }

  friend bool operator==(const VistaParams&, const VistaParams&) = default;
};

/// Core user embeddings projected into consumer and producer roles.
struct CPRecParams {
  static constexpr ModelKind kKind = ModelKind::kCPRec;
  static constexpr std::array<std::string_view, 5> kNames = {"core_emb", "item_emb", "item_bias", "consumer_proj",
                                                             "producer_proj"};
  Matrix core_emb;       // |U| x K
  Matrix item_emb;       // |I| x K
  Matrix item_bias;      // |I| x 1
  Matrix consumer_proj;  // K x K
  Matrix producer_proj;  // K x K

  auto tensors() { return std::array<Matrix*, 5>{&core_emb, &item_emb, &item_bias, &consumer_proj, &producer_proj}; }
  auto tensors() const {
    return std::array<const Matrix*, 5>{&core_emb, &item_emb, &item_bias, &consumer_proj, &producer_proj};
  }

  friend bool operator==(const CPRecParams&, const CPRecParams&) = default;
};

using ModelParams = std::variant<PopRecParams, BprMfParams, FmParams, VistaParams, CPRecParams>;

ModelKind model_kind(const ModelParams& p);
std::size_t parameter_count(const ModelParams& p);
/// Latent dimensionality; 0 for PopRec.
std::size_t latent_dim(const ModelParams& p);
std::size_t n_items(const ModelParams& p);
/// 0 for PopRec, which stores no per-user state.
std::size_t n_users(const ModelParams& p);

/// Names and tensors in declared order.
std::vector<std::pair<std::string_view, const Matrix*>> named_tensors(const ModelParams& p);
std::vector<Matrix*> mutable_tensors(ModelParams& p);

/// Same alternative and shapes, all zeros.
ModelParams zeros_like(const ModelParams& p);

enum class ProjectionInit {
  kNearIdentity,  // I + N(0, 0.1^2)
  kIdentity,      // exactly I
  kNoise,         // N(0, 0.1^2)
};

/// Embeddings i.i.d. N(0, 0.1^2), biases zero, projections per `projection`.
ModelParams init_params(ModelKind kind, std::size_t n_users, std::size_t n_items, std::size_t k, std::uint64_t seed,
                        ProjectionInit projection = ProjectionInit::kNearIdentity);

/// Counts training-split interactions per item.
PopRecParams fit_poprec(std::span<const std::vector<ItemId>> train, std::size_t n_items);

struct RoleEmbeddings {
  std::vector<double> consumer;
  std::vector<double> producer;
};

RoleEmbeddings role_embeddings(const CPRecParams& p, UserId u);

double score_poprec(const PopRecParams& p, ItemId i);
double score_bpr(const BprMfParams& p, UserId u, ItemId i);
double score_fm(const FmParams& p, UserId u, ItemId i, std::span<const UserId> producer_of);
double score_vista(const VistaParams& p, UserId u, ItemId i, std::span<const UserId> producer_of);
double score_cprec(const CPRecParams& p, UserId u, ItemId i, std::span<const UserId> producer_of);
double score(const ModelParams& p, UserId u, ItemId i, std::span<const UserId> producer_of);

/// Uniform scoring front end over any model. Holds references; the params and
/// producer map must outlive it. CPRec producer-role vectors are cached at
/// construction.
class Scorer {
 public:
  Scorer(const ModelParams& params, std::span<const UserId> producer_of);

  double score(UserId u, ItemId i) const;
  void score_items(UserId u, std::span<const ItemId> items, std::span<double> out) const;
  std::vector<double> score_items(UserId u, std::span<const ItemId> items) const;
  /// out.size() must equal the item count.
  void score_all(UserId u, std::span<double> out) const;

  std::size_t n_items() const { return n_items_; }
  const ModelParams& params() const { return params_; }

 private:
  const ModelParams& params_;
  std::span<const UserId> producer_of_;
  std::size_t n_items_;
  Matrix producer_role_;  // CPRec only: row v = W_p * core_v
};

}  // namespace cprec
