#include "cprec/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "cprec/eval.hpp"
#include "cprec/text_io.hpp"

namespace cprec {

TripleSampler::TripleSampler(const Split& split, std::span<const std::vector<ItemId>> positives, std::size_t n_items)
    : split_(split), positives_(positives), n_items_(n_items) {
  for (UserId u = 0; u < split.train.size(); ++u) {
    if (!split.train[u].empty()) users_.push_back(u);
  }
}

Triple TripleSampler::sample(std::mt19937_64& rng) const {
  if (users_.empty()) throw Error(ErrorCode::kSamplerStarved, "no user has training positives");
  const UserId u = users_[std::uniform_int_distribution<std::size_t>(0, users_.size() - 1)(rng)];
  const auto& train = split_.train[u];
  const ItemId i = train[std::uniform_int_distribution<std::size_t>(0, train.size() - 1)(rng)];
  const auto& pos = positives_[u];
  std::uniform_int_distribution<ItemId> item_dist(0, static_cast<ItemId>(n_items_ - 1));
  for (std::size_t attempt = 0; attempt < kMaxRejections; ++attempt) {
    const ItemId j = item_dist(rng);
    if (!std::binary_search(pos.begin(), pos.end(), j)) return {u, i, j};
  }
  throw Error(ErrorCode::kSamplerStarved,
              "negative sampling exceeded " + std::to_string(kMaxRejections) + " rejections for user " +
                  std::to_string(u));
}

std::vector<Triple> TripleSampler::sample(std::size_t n, std::mt19937_64& rng) const {
  std::vector<Triple> out(n);
  sample_into(out, rng);
  return out;
}

void TripleSampler::sample_into(std::span<Triple> out, std::mt19937_64& rng) const {
  for (auto& t : out) t = sample(rng);
}

double neg_log_sigmoid(double x) { return std::max(-x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

namespace {

// sigmoid(-x), the magnitude of d/dx of -ln sigmoid(x).
double sigmoid_neg(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(x));
}

double sq_norm(std::span<const double> v) { return dot(v, v); }

// Per-thread scratch rows so the per-triple terms do not allocate.
std::span<double> scratch(std::size_t slot, std::size_t dim) {
  thread_local std::vector<double> buf;
  constexpr std::size_t kSlots = 4;
  if (buf.size() < kSlots * dim) buf.resize(kSlots * dim);
  return {buf.data() + slot * dim, dim};
}

// Each overload returns the triple's pairwise loss and, when grad is non-null,
// accumulates inv_b * d(loss)/d(theta). Regularization is added per batch.

double triple_term(const BprMfParams& p, const Triple& t, std::span<const UserId>, double inv_b, BprMfParams* grad) {
  const auto user = p.user_emb.row(t.u);
  const auto pos = p.item_emb.row(t.i);
  const auto neg = p.item_emb.row(t.j);
  const double d = score_bpr(p, t.u, t.i) - score_bpr(p, t.u, t.j);
  if (grad != nullptr) {
    const double g = -sigmoid_neg(d) * inv_b;
    auto gu = grad->user_emb.row(t.u);
    auto gi = grad->item_emb.row(t.i);
    auto gj = grad->item_emb.row(t.j);
    for (std::size_t k = 0; k < user.size(); ++k) {
      gu[k] += g * (pos[k] - neg[k]);
      gi[k] += g * user[k];
      gj[k] += -g * user[k];
    }
    grad->item_bias(t.i, 0) += g;
    grad->item_bias(t.j, 0) -= g;
  }
  return neg_log_sigmoid(d);
}

double triple_term(const FmParams& p, const Triple& t, std::span<const UserId> producer_of, double inv_b,
                   FmParams* grad) {
  const UserId pi = producer_of[t.i];
  const UserId pj = producer_of[t.j];
  const auto user = p.user_emb.row(t.u);
  const auto pos = p.item_emb.row(t.i);
  const auto neg = p.item_emb.row(t.j);
  const auto prod_i = p.producer_emb.row(pi);
  const auto prod_j = p.producer_emb.row(pj);
  const double d = score_fm(p, t.u, t.i, producer_of) - score_fm(p, t.u, t.j, producer_of);
  if (grad != nullptr) {
    const double g = -sigmoid_neg(d) * inv_b;
    auto gu = grad->user_emb.row(t.u);
    auto gi = grad->item_emb.row(t.i);
    auto gj = grad->item_emb.row(t.j);
    auto gpi = grad->producer_emb.row(pi);
    auto gpj = grad->producer_emb.row(pj);
    for (std::size_t k = 0; k < user.size(); ++k) {
      gu[k] += g * (pos[k] - neg[k] + prod_i[k] - prod_j[k]);
      gi[k] += g * (user[k] + prod_i[k]);
      gj[k] += -g * (user[k] + prod_j[k]);
      gpi[k] += g * (user[k] + pos[k]);
      gpj[k] += -g * (user[k] + neg[k]);
    }
    grad->item_bias(t.i, 0) += g;
    grad->item_bias(t.j, 0) -= g;
    grad->producer_bias(pi, 0) += g;
    grad->producer_bias(pj, 0) -= g;
  }
  return neg_log_sigmoid(d);
}

double triple_term(const VistaParams& p, const Triple& t, std::span<const UserId> producer_of, double inv_b,
                   VistaParams* grad) {
  const UserId pi = producer_of[t.i];
  const UserId pj = producer_of[t.j];
  const auto user1 = p.user_emb1.row(t.u);
  const auto user2 = p.user_emb2.row(t.u);
  const auto pos = p.item_emb.row(t.i);
  const auto neg = p.item_emb.row(t.j);
  const auto prod_i = p.user_emb2.row(pi);
  const auto prod_j = p.user_emb2.row(pj);
  const double d = score_vista(p, t.u, t.i, producer_of) - score_vista(p, t.u, t.j, producer_of);
  if (grad != nullptr) {
    const double g = -sigmoid_neg(d) * inv_b;
    // user2, prod_i and prod_j may be one row; every update below is additive.
    auto gu1 = grad->user_emb1.row(t.u);
    auto gu2 = grad->user_emb2.row(t.u);
    auto gi = grad->item_emb.row(t.i);
    auto gj = grad->item_emb.row(t.j);
    auto gpi = grad->user_emb2.row(pi);
    auto gpj = grad->user_emb2.row(pj);
    for (std::size_t k = 0; k < user1.size(); ++k) {
      gu1[k] += g * (pos[k] - neg[k]);
      gi[k] += g * user1[k];
      gj[k] += -g * user1[k];
      gu2[k] += g * (prod_i[k] - prod_j[k]);
      gpi[k] += g * user2[k];
      gpj[k] += -g * user2[k];
    }
    grad->item_bias(t.i, 0) += g;
    grad->item_bias(t.j, 0) -= g;
  }
  return neg_log_sigmoid(d);
}

double triple_term(const CPRecParams& p, const Triple& t, std::span<const UserId> producer_of, double inv_b,
                   CPRecParams* grad) {
  const std::size_t dim = p.core_emb.cols();
  const UserId pi = producer_of[t.i];
  const UserId pj = producer_of[t.j];
  const auto core_u = p.core_emb.row(t.u);
  const auto core_pi = p.core_emb.row(pi);
  const auto core_pj = p.core_emb.row(pj);
  const auto pos = p.item_emb.row(t.i);
  const auto neg = p.item_emb.row(t.j);

  const auto consumer = scratch(0, dim), role_i = scratch(1, dim), role_j = scratch(2, dim);
  matvec(p.consumer_proj, core_u, consumer);
  matvec(p.producer_proj, core_pi, role_i);
  matvec(p.producer_proj, core_pj, role_j);
  const double x_ui = p.item_bias(t.i, 0) + dot(consumer, pos) + dot(consumer, role_i);
  const double x_uj = p.item_bias(t.j, 0) + dot(consumer, neg) + dot(consumer, role_j);
  const double d = x_ui - x_uj;
  if (grad != nullptr) {
    const double g = -sigmoid_neg(d) * inv_b;
    // d(margin)/d(consumer role vector)
    const auto a = scratch(3, dim);
    for (std::size_t k = 0; k < dim; ++k) a[k] = pos[k] - neg[k] + role_i[k] - role_j[k];

    add_matvec_transposed(p.consumer_proj, a, g, grad->core_emb.row(t.u));
    add_matvec_transposed(p.producer_proj, consumer, g, grad->core_emb.row(pi));
    add_matvec_transposed(p.producer_proj, consumer, -g, grad->core_emb.row(pj));

    add_outer(grad->consumer_proj, a, core_u, g);
    add_outer(grad->producer_proj, consumer, core_pi, g);
    add_outer(grad->producer_proj, consumer, core_pj, -g);

    auto gi = grad->item_emb.row(t.i);
    auto gj = grad->item_emb.row(t.j);
    for (std::size_t k = 0; k < dim; ++k) {
      gi[k] += g * consumer[k];
      gj[k] += -g * consumer[k];
    }
    grad->item_bias(t.i, 0) += g;
    grad->item_bias(t.j, 0) -= g;
  }
  return neg_log_sigmoid(d);
}

// A regularized row: index into P::tensors() and the row within it.
struct RowRef {
  std::size_t tensor;
  std::size_t row;
  friend auto operator<=>(const RowRef&, const RowRef&) = default;
};

// Rows one triple references, before de-duplication across the batch.
void touched(const BprMfParams&, const Triple& t, std::span<const UserId>, std::vector<RowRef>& out) {
  out.insert(out.end(), {{0, t.u}, {1, t.i}, {1, t.j}});
}

void touched(const FmParams&, const Triple& t, std::span<const UserId> producer_of, std::vector<RowRef>& out) {
  out.insert(out.end(), {{0, t.u}, {1, t.i}, {1, t.j}, {2, producer_of[t.i]}, {2, producer_of[t.j]}});
}

void touched(const VistaParams&, const Triple& t, std::span<const UserId> producer_of, std::vector<RowRef>& out) {
  out.insert(out.end(),
             {{0, t.u}, {1, t.u}, {2, t.i}, {2, t.j}, {1, producer_of[t.i]}, {1, producer_of[t.j]}});
}

void touched(const CPRecParams& p, const Triple& t, std::span<const UserId> producer_of, std::vector<RowRef>& out) {
  out.insert(out.end(), {{0, t.u}, {0, producer_of[t.i]}, {0, producer_of[t.j]}, {1, t.i}, {1, t.j}});
  // Every triple reaches both projections in full.
  for (std::size_t r = 0; r < p.consumer_proj.rows(); ++r) out.insert(out.end(), {{3, r}, {4, r}});
}

// lambda * inv_b * sum of squared norms over the distinct rows the batch touches.
template <class P>
double regularize(const P& p, std::span<const Triple> batch, std::span<const UserId> producer_of, double lambda,
                  double inv_b, P* grad) {
  thread_local std::vector<RowRef> rows;
  rows.clear();
  for (const auto& t : batch) touched(p, t, producer_of, rows);
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  const auto params = p.tensors();
  double sum = 0.0;
  for (const auto& r : rows) {
    const auto row = params[r.tensor]->row(r.row);
    sum += sq_norm(row);
    if (grad != nullptr) axpy(2.0 * lambda * inv_b, row, grad->tensors()[r.tensor]->row(r.row));
  }
  return lambda * inv_b * sum;
}

template <class P>
double loss_impl(const P& p, std::span<const Triple> batch, std::span<const UserId> producer_of, double lambda,
                 P* grad) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double sum = 0.0;
  for (const auto& t : batch) sum += triple_term(p, t, producer_of, inv_b, grad);
  return sum * inv_b + regularize(p, batch, producer_of, lambda, inv_b, grad);
}

}  // namespace

double bpr_loss_and_gradients(const ModelParams& params, std::span<const Triple> batch,
                              std::span<const UserId> producer_of, double lambda, ModelParams& grads) {
  if (grads.index() != params.index()) grads = zeros_like(params);
  for (Matrix* t : mutable_tensors(grads)) t->fill(0.0);
  return std::visit(
      [&](const auto& p) -> double {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, PopRecParams>) {
          throw std::invalid_argument("PopRec has no BPR objective");
        } else {
          return loss_impl(p, batch, producer_of, lambda, &std::get<P>(grads));
        }
      },
      params);
}

double bpr_loss(const ModelParams& params, std::span<const Triple> batch, std::span<const UserId> producer_of,
                double lambda) {
  return std::visit(
      [&](const auto& p) -> double {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, PopRecParams>) {
          throw std::invalid_argument("PopRec has no BPR objective");
        } else {
          return loss_impl<P>(p, batch, producer_of, lambda, nullptr);
        }
      },
      params);
}

ModelParams bpr_gradients(const ModelParams& params, std::span<const Triple> batch,
                          std::span<const UserId> producer_of, double lambda) {
  ModelParams grads = zeros_like(params);
  bpr_loss_and_gradients(params, batch, producer_of, lambda, grads);
  return grads;
}

AdamState AdamState::for_params(const ModelParams& params, AdamOptions options) {
  return AdamState{zeros_like(params), zeros_like(params), 0, options};
}

void adam_update(std::span<double> theta, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::int64_t t, double learning_rate, const AdamOptions& o) {
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double g = grad[k];
    m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g;
    v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g * g;
    const double m_hat = m[k] / c1;
    const double v_hat = v[k] / c2;
    theta[k] -= learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
  }
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double learning_rate) {
  if (grads.index() != params.index() || state.m.index() != params.index()) {
    throw std::invalid_argument("adam_step: parameter, gradient and state kinds differ");
  }
  ++state.t;
  auto theta = mutable_tensors(params);
  auto m = mutable_tensors(state.m);
  auto v = mutable_tensors(state.v);
  const auto g = named_tensors(grads);
  for (std::size_t k = 0; k < theta.size(); ++k) {
    if (g[k].second->size() != theta[k]->size()) throw std::invalid_argument("adam_step: shape mismatch");
    adam_update(theta[k]->values(), g[k].second->values(), m[k]->values(), v[k]->values(), state.t, learning_rate,
                state.options);
  }
}

std::string TrainReport::to_csv(bool include_seconds) const {
  std::ostringstream out;
  out << (include_seconds ? "epoch,loss,val_auc,seconds\n" : "epoch,loss,val_auc\n");
  for (const auto& e : epochs) {
    out << e.epoch << ',' << format_double(e.loss) << ',' << format_double(e.val_auc);
    if (include_seconds) out << ',' << format_double(e.seconds);
    out << '\n';
  }
  return out.str();
}

TrainResult train(const Dataset& dataset, const Split& split, ModelKind kind, const TrainConfig& config) {
  if (split.n_users() != dataset.n_users()) throw std::invalid_argument("split does not match dataset");
  if (kind == ModelKind::kPopRec) return {fit_poprec(split.train, dataset.n_items()), {}};

  TrainResult result{init_params(kind, dataset.n_users(), dataset.n_items(), config.k, config.seed,
                                 config.projection_init),
                     {}};
  if (config.max_epochs == 0) return result;

  const std::size_t n_actions = split.n_train_actions();
  if (n_actions == 0) throw Error(ErrorCode::kSamplerStarved, "no training positives");
  if (config.batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  const std::size_t batch = std::min(config.batch_size, n_actions);
  const std::size_t n_batches = (n_actions + batch - 1) / batch;

  const TripleSampler sampler(split, dataset.positives, dataset.n_items());
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32), 0x7a1eu};
  std::mt19937_64 rng(seq);

  ModelParams& params = result.params;
  ModelParams grads = zeros_like(params);
  AdamState adam = AdamState::for_params(params);
  std::vector<Triple> triples(batch);

  EvalOptions eval;
  eval.target = EvalTarget::kValidation;
  eval.sampled_negatives = config.val_negatives;
  eval.seed = config.seed;
  eval.threads = config.threads;

  ModelParams best = params;
  double best_auc = -std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      sampler.sample_into(triples, rng);
      loss_sum += bpr_loss_and_gradients(params, triples, dataset.producer_of, config.lambda, grads);
      adam_step(params, grads, adam, config.learning_rate);
    }
    const double loss = loss_sum / static_cast<double>(n_batches);
    if (!std::isfinite(loss)) throw NonFiniteLoss(epoch);
    const double val_auc = evaluate_auc(params, dataset, split, eval).auc_all;
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.report.epochs.push_back({epoch, loss, val_auc, seconds});

    // Without validation users every epoch counts as the newest best.
    if (std::isnan(val_auc) || val_auc > best_auc) {
      best_auc = std::isnan(val_auc) ? best_auc : val_auc;
      result.report.best_epoch = epoch;
      best = params;
    } else if (epoch - *result.report.best_epoch >= config.patience) {
      break;
    }
  }
  params = std::move(best);
  return result;
}

GridSearchResult grid_search(const Dataset& dataset, const Split& split, ModelKind kind,
                             const TrainConfig& base_config, std::span<const double> lambda_grid) {
  if (lambda_grid.empty()) throw std::invalid_argument("empty lambda grid");
  GridSearchResult out;
  double best_auc = -std::numeric_limits<double>::infinity();
  for (double lambda : lambda_grid) {
    GridCell cell;
    cell.lambda = lambda;
    try {
      TrainConfig config = base_config;
      config.lambda = lambda;
      TrainResult trained = train(dataset, split, kind, config);
      if (trained.report.best_epoch) {
        cell.val_auc = trained.report.epochs[*trained.report.best_epoch - 1].val_auc;
      } else {
        EvalOptions eval;
        eval.target = EvalTarget::kValidation;
        eval.sampled_negatives = config.val_negatives;
        eval.seed = config.seed;
        eval.threads = config.threads;
        cell.val_auc = evaluate_auc(trained.params, dataset, split, eval).auc_all;
      }
      cell.report = std::move(trained.report);
      const bool better = cell.val_auc > best_auc + kGridTieTolerance;
      const bool tie_larger = std::abs(cell.val_auc - best_auc) <= kGridTieTolerance && out.best_lambda &&
                              lambda > *out.best_lambda;
      if (!out.best_lambda || better || tie_larger) {
        best_auc = cell.val_auc;
        out.best_lambda = lambda;
        out.best_params = std::move(trained.params);
      }
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    out.cells.push_back(std::move(cell));
  }
  return out;
}

}  // namespace cprec
