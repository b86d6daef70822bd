#include "cprec/models.hpp"

#include <random>
#include <stdexcept>
#include <string>

namespace cprec {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kPopRec: return "poprec";
    case ModelKind::kBprMf: return "bpr";
    case ModelKind::kFm: return "fm";
    case ModelKind::kVista: return "vista";
    case ModelKind::kCPRec: return "cprec";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "poprec") return ModelKind::kPopRec;
  if (name == "bpr" || name == "bprmf" || name == "bpr-mf") return ModelKind::kBprMf;
  if (name == "fm") return ModelKind::kFm;
  if (name == "vista") return ModelKind::kVista;
  if (name == "cprec") return ModelKind::kCPRec;
  throw std::invalid_argument("unknown model '" + std::string(name) + "'");
}

ModelKind model_kind(const ModelParams& p) {
  return std::visit([](const auto& m) { return std::decay_t<decltype(m)>::kKind; }, p);
}

std::size_t parameter_count(const ModelParams& p) {
  std::size_t n = 0;
  for (const auto& [name, t] : named_tensors(p)) n += t->size();
  return n;
}

std::size_t latent_dim(const ModelParams& p) {
  if (std::holds_alternative<PopRecParams>(p)) return 0;
  // Every embedding model lists a |.| x K table second.
  return named_tensors(p)[1].second->cols();
}

std::size_t n_items(const ModelParams& p) {
  return std::visit(
      [](const auto& m) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, PopRecParams>) {
          return m.popularity.rows();
        } else {
          return m.item_emb.rows();
        }
      },
      p);
}

std::size_t n_users(const ModelParams& p) {
  if (std::holds_alternative<PopRecParams>(p)) return 0;
  return named_tensors(p)[0].second->rows();
}

std::vector<std::pair<std::string_view, const Matrix*>> named_tensors(const ModelParams& p) {
  return std::visit(
      [](const auto& m) {
        std::vector<std::pair<std::string_view, const Matrix*>> out;
        const auto ts = m.tensors();
        for (std::size_t k = 0; k < ts.size(); ++k) out.emplace_back(m.kNames[k], ts[k]);
        return out;
      },
      p);
}

std::vector<Matrix*> mutable_tensors(ModelParams& p) {
  return std::visit(
      [](auto& m) {
        const auto ts = m.tensors();
        return std::vector<Matrix*>(ts.begin(), ts.end());
      },
      p);
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams out = p;
  for (Matrix* t : mutable_tensors(out)) t->fill(0.0);
  return out;
}

ModelParams init_params(ModelKind kind, std::size_t n_users, std::size_t n_items, std::size_t k, std::uint64_t seed,
                        ProjectionInit projection) {
  if (kind != ModelKind::kPopRec && k < 1) throw std::invalid_argument("latent dimension must be at least 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.1);
  auto gaussian = [&](std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = noise(rng);
    return m;
  };
  auto projection_matrix = [&] {
    switch (projection) {
      case ProjectionInit::kIdentity: return Matrix::identity(k);
      case ProjectionInit::kNoise: return gaussian(k, k);
      case ProjectionInit::kNearIdentity: break;
    }
    Matrix m = gaussian(k, k);
    for (std::size_t d = 0; d < k; ++d) m(d, d) += 1.0;
    return m;
  };

  switch (kind) {
    case ModelKind::kPopRec: return PopRecParams{Matrix(n_items, 1)};
    case ModelKind::kBprMf: {
      BprMfParams m;
      m.user_emb = gaussian(n_users, k);
      m.item_emb = gaussian(n_items, k);
      m.item_bias = Matrix(n_items, 1);
      return m;
    }
    case ModelKind::kFm: {
      FmParams m;
      m.user_emb = gaussian(n_users, k);
      m.item_emb = gaussian(n_items, k);
      m.producer_emb = gaussian(n_users, k);
      m.item_bias = Matrix(n_items, 1);
      m.producer_bias = Matrix(n_users, 1);
      m.user_bias = Matrix(n_users, 1);
      return m;
    }
    case ModelKind::kVista: {
      VistaParams m;
      m.user_emb1 = gaussian(n_users, k);
      m.user_emb2 = gaussian(n_users, k);
      m.item_emb = gaussian(n_items, k);
      m.item_bias = Matrix(n_items, 1);
      return m;
    }
    case ModelKind::kCPRec: {
      CPRecParams m;
      m.core_emb = gaussian(n_users, k);
      m.item_emb = gaussian(n_items, k);
      m.item_bias = Matrix(n_items, 1);
      m.consumer_proj = projection_matrix();
      m.producer_proj = projection_matrix();
      return m;
    }
  }
  throw std::invalid_argument("unknown model kind");
}

PopRecParams fit_poprec(std::span<const std::vector<ItemId>> train, std::size_t n_items) {
  PopRecParams p{Matrix(n_items, 1)};
  for (const auto& items : train) {
    for (auto i : items) p.popularity(i, 0) += 1.0;
  }
  return p;
}

RoleEmbeddings role_embeddings(const CPRecParams& p, UserId u) {
  const auto k = p.core_emb.cols();
  RoleEmbeddings r{std::vector<double>(k), std::vector<double>(k)};
  matvec(p.consumer_proj, p.core_emb.row(u), r.consumer);
  matvec(p.producer_proj, p.core_emb.row(u), r.producer);
  return r;
}

double score_poprec(const PopRecParams& p, ItemId i) { return p.popularity(i, 0); }

double score_bpr(const BprMfParams& p, UserId u, ItemId i) {
  return p.item_bias(i, 0) + dot(p.user_emb.row(u), p.item_emb.row(i));
}

double score_fm(const FmParams& p, UserId u, ItemId i, std::span<const UserId> producer_of) {
  const UserId owner = producer_of[i];
  const auto user = p.user_emb.row(u);
  const auto item = p.item_emb.row(i);
  const auto prod = p.producer_emb.row(owner);
  return p.user_bias(u, 0) + p.item_bias(i, 0) + p.producer_bias(owner, 0) + dot(user, item) + dot(user, prod) +
         dot(item, prod);
}

double score_vista(const VistaParams& p, UserId u, ItemId i, std::span<const UserId> producer_of) {
  return p.item_bias(i, 0) + dot(p.user_emb1.row(u), p.item_emb.row(i)) +
         dot(p.user_emb2.row(u), p.user_emb2.row(producer_of[i]));
}

namespace {

double cprec_from_roles(const CPRecParams& p, std::span<const double> consumer, ItemId i,
                        std::span<const double> producer_role) {
  return p.item_bias(i, 0) + dot(consumer, p.item_emb.row(i)) + dot(consumer, producer_role);
}

}  // namespace

double score_cprec(const CPRecParams& p, UserId u, ItemId i, std::span<const UserId> producer_of) {
  const auto k = p.core_emb.cols();
  std::vector<double> consumer(k), producer(k);
  matvec(p.consumer_proj, p.core_emb.row(u), consumer);
  matvec(p.producer_proj, p.core_emb.row(producer_of[i]), producer);
  return cprec_from_roles(p, consumer, i, producer);
}

double score(const ModelParams& params, UserId u, ItemId i, std::span<const UserId> producer_of) {
  return std::visit(
      [&](const auto& p) -> double {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, PopRecParams>) {
          return score_poprec(p, i);
        } else if constexpr (std::is_same_v<P, BprMfParams>) {
          return score_bpr(p, u, i);
        } else if constexpr (std::is_same_v<P, FmParams>) {
          return score_fm(p, u, i, producer_of);
        } else if constexpr (std::is_same_v<P, VistaParams>) {
          return score_vista(p, u, i, producer_of);
        } else {
          return score_cprec(p, u, i, producer_of);
        }
      },
      params);
}

Scorer::Scorer(const ModelParams& params, std::span<const UserId> producer_of)
    : params_(params), producer_of_(producer_of), n_items_(cprec::n_items(params)) {
  if (const auto* p = std::get_if<CPRecParams>(&params_)) {
    producer_role_ = Matrix(p->core_emb.rows(), p->core_emb.cols());
    for (std::size_t v = 0; v < p->core_emb.rows(); ++v) {
      matvec(p->producer_proj, p->core_emb.row(v), producer_role_.row(v));
    }
  }
}

double Scorer::score(UserId u, ItemId i) const {
  double out = 0.0;
  score_items(u, std::span<const ItemId>(&i, 1), std::span<double>(&out, 1));
  return out;
}

void Scorer::score_items(UserId u, std::span<const ItemId> items, std::span<double> out) const {
  if (const auto* p = std::get_if<CPRecParams>(&params_)) {
    std::vector<double> consumer(p->core_emb.cols());
    matvec(p->consumer_proj, p->core_emb.row(u), consumer);
    for (std::size_t k = 0; k < items.size(); ++k) {
      out[k] = cprec_from_roles(*p, consumer, items[k], producer_role_.row(producer_of_[items[k]]));
    }
    return;
  }
  for (std::size_t k = 0; k < items.size(); ++k) out[k] = cprec::score(params_, u, items[k], producer_of_);
}

std::vector<double> Scorer::score_items(UserId u, std::span<const ItemId> items) const {
  std::vector<double> out(items.size());
  score_items(u, items, out);
  return out;
}

void Scorer::score_all(UserId u, std::span<double> out) const {
  if (const auto* p = std::get_if<CPRecParams>(&params_)) {
    std::vector<double> consumer(p->core_emb.cols());
    matvec(p->consumer_proj, p->core_emb.row(u), consumer);
    for (ItemId i = 0; i < n_items_; ++i) {
      out[i] = cprec_from_roles(*p, consumer, i, producer_role_.row(producer_of_[i]));
    }
    return;
  }
  for (ItemId i = 0; i < n_items_; ++i) out[i] = cprec::score(params_, u, i, producer_of_);
}

}  // namespace cprec
