#pragma once

#include <cstdint>
#include <vector>

#include "cprec/dataset.hpp"

namespace cprec {

/// Closed-loop UGC corpus: every user owns items, and consumption mixes item
/// affinity with affinity for the item's producer.
struct SynthConfig {
  std::size_t n_users = 2000;
  std::size_t n_items_per_producer = 10;
  std::size_t k_true = 8;
  // 0 = consumption driven by item vectors only, 1 = by producer style only.
  double appreciation_weight = 0.7;
  // Std-dev of per (user, item) Gaussian logit noise.
  double noise = 0.5;
  // Poisson mean of items consumed per user.
  double mean_actions = 15.0;
  // Multiplier on the unit-variance affinity before the softmax.
  double sharpness = 6.0;
  std::uint64_t seed = 1;
};

struct SynthCorpus {
  std::vector<RawInteraction> interactions;
  std::vector<ProducerRecord> producers;
};

/// User tokens are "u<n>", item tokens "i<n>"; item n belongs to user
/// n / n_items_per_producer.
SynthCorpus generate_synthetic_corpus(const SynthConfig& config);

Dataset generate_synthetic(const SynthConfig& config);

}  // namespace cprec
