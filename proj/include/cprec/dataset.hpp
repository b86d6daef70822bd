#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cprec/types.hpp"

namespace cprec {

struct RawInteraction {
  std::string user_token;
  std::string item_token;
};

struct ProducerRecord {
  std::string item_token;
  std::string user_token;
};

/// Bidirectional token <-> dense id map. Ids are handed out in first-seen order.
class TokenIndex {
 public:
  std::uint32_t intern(std::string_view token);
  std::optional<std::uint32_t> find(std::string_view token) const;
  const std::string& token(std::uint32_t id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

/// Id-mapped implicit feedback store. Immutable once built.
struct Dataset {
  std::vector<std::vector<ItemId>> positives;  // per user, sorted, unique
  std::vector<UserId> producer_of;             // per item
  TokenIndex users;
  TokenIndex items;

  std::size_t n_users() const { return users.size(); }
  std::size_t n_items() const { return items.size(); }
  std::size_t n_actions() const;

  bool is_positive(UserId u, ItemId i) const;

  /// Throws std::logic_error if an internal invariant is broken.
  void validate() const;
};

struct RolePartition {
  std::vector<UserId> consumers;
  std::vector<UserId> producers;
  std::vector<UserId> prosumers;
};

/// Per-user leave-one-out assignment.
struct Split {
  std::vector<std::vector<ItemId>> train;
  std::vector<std::optional<ItemId>> val;
  std::vector<std::optional<ItemId>> test;
  std::uint64_t seed = 0;

  std::size_t n_users() const { return train.size(); }
  std::size_t n_train_actions() const;

  friend bool operator==(const Split&, const Split&) = default;
};

struct ConsumptionPoint {
  UserId user = 0;
  std::size_t distinct_producers = 0;
  std::size_t items = 0;
};

struct CorpusStats {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t n_actions = 0;
  double consumer_ratio = 0.0;
  double producer_ratio = 0.0;
  double prosumer_ratio = 0.0;
  std::vector<ConsumptionPoint> per_user;

  // Mean over consumers of distinct_producers / items.
  double mean_distinct_producer_ratio() const;
};

struct FilterOptions {
  std::size_t min_actions = 10;
  bool iterate_to_fixpoint = false;
};

Dataset ingest(std::span<const RawInteraction> interactions, std::span<const ProducerRecord> producers);

/// Tab separated `user<TAB>item[<TAB>...]`. Blank lines are skipped.
std::vector<RawInteraction> read_interactions(const std::filesystem::path& path);
/// Tab separated `item<TAB>user[<TAB>...]`.
std::vector<ProducerRecord> read_producers(const std::filesystem::path& path);

/// Removes users and items with fewer than `min_actions` interactions. Single
/// pass drops users first, then items. Producers of retained items stay as users.
/// Throws Error(kEmptyAfterFilter) when no interaction survives.
Dataset filter_inactive(const Dataset& d, const FilterOptions& options);

RolePartition role_partition(const Dataset& d);

/// Users with >= 3 positives get one uniformly drawn validation item and one test
/// item; others keep everything in train.
Split split_leave_one_out(const Dataset& d, std::uint64_t seed);

CorpusStats corpus_stats(const Dataset& d);

// Prepared data directory: users.txt, items.tsv (item, producer), train.tsv,
// val.tsv, test.tsv and prepared.json.
inline constexpr std::array<std::string_view, 6> kPreparedFiles = {"users.txt", "items.tsv", "train.tsv",
                                                                    "val.tsv",   "test.tsv",  "prepared.json"};

struct PreparedData {
  Dataset dataset;
  Split split;
  FilterOptions filter;
};

void write_prepared(const std::filesystem::path& dir, const Dataset& d, const Split& split,
                    const FilterOptions& filter);
PreparedData read_prepared(const std::filesystem::path& dir);

}  // namespace cprec
