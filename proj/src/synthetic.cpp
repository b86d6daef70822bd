#include "cprec/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "cprec/types.hpp"

namespace cprec {

namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

}  // namespace

SynthCorpus generate_synthetic_corpus(const SynthConfig& c) {
  if (c.n_users == 0 || c.n_items_per_producer == 0 || c.k_true == 0) {
    throw std::invalid_argument("synthetic corpus sizes must be positive");
  }
  if (c.appreciation_weight < 0.0 || c.appreciation_weight > 1.0) {
    throw std::invalid_argument("appreciation_weight must lie in [0, 1]");
  }
  const std::size_t k = c.k_true;
  const std::size_t n_items = c.n_users * c.n_items_per_producer;
  std::mt19937_64 rng(c.seed);

  // Both role vectors of a user derive from one latent core.
  const Matrix core = gaussian(c.n_users, k, 1.0, rng);
  const Matrix taste_proj = gaussian(k, k, 1.0 / std::sqrt(static_cast<double>(k)), rng);
  const Matrix style_proj = gaussian(k, k, 1.0 / std::sqrt(static_cast<double>(k)), rng);
  const Matrix item_vec = gaussian(n_items, k, 1.0, rng);
  Matrix taste(c.n_users, k), style(c.n_users, k);
  for (std::size_t u = 0; u < c.n_users; ++u) {
    matvec(taste_proj, core.row(u), taste.row(u));
    matvec(style_proj, core.row(u), style.row(u));
  }

  SynthCorpus out;
  out.producers.reserve(n_items);
  for (std::size_t i = 0; i < n_items; ++i) {
    out.producers.push_back({"i" + std::to_string(i), "u" + std::to_string(i / c.n_items_per_producer)});
  }

  const double w = c.appreciation_weight;
  const double scale = c.sharpness / std::sqrt(static_cast<double>(k));
  std::poisson_distribution<std::size_t> n_actions(c.mean_actions);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> producer_affinity(c.n_users);
  std::vector<double> keys(n_items);
  std::vector<std::size_t> order(n_items);

  for (std::size_t u = 0; u < c.n_users; ++u) {
    const std::size_t n = std::min(n_actions(rng), n_items);
    if (n == 0) continue;
    const auto t = taste.row(u);
    for (std::size_t v = 0; v < c.n_users; ++v) producer_affinity[v] = dot(t, style.row(v));
    // Gumbel top-n draws n distinct items with probability proportional to exp(logit).
    for (std::size_t i = 0; i < n_items; ++i) {
      const double affinity =
          (1.0 - w) * dot(t, item_vec.row(i)) + w * producer_affinity[i / c.n_items_per_producer];
      const double logit = scale * affinity + c.noise * noise(rng);
      keys[i] = logit - std::log(-std::log(std::max(unit(rng), 1e-300)));
    }
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                      [&](std::size_t a, std::size_t b) { return keys[a] > keys[b] || (keys[a] == keys[b] && a < b); });
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
    const std::string user = "u" + std::to_string(u);
    for (std::size_t r = 0; r < n; ++r) out.interactions.push_back({user, "i" + std::to_string(order[r])});
  }
  return out;
}

Dataset generate_synthetic(const SynthConfig& config) {
  const auto corpus = generate_synthetic_corpus(config);
  return ingest(corpus.interactions, corpus.producers);
}

}  // namespace cprec
