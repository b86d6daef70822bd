#include "cprec/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "cprec/text_io.hpp"

namespace cprec {

namespace fs = std::filesystem;

std::uint32_t TokenIndex::intern(std::string_view token) {
  auto it = ids_.find(std::string(token));
  if (it != ids_.end()) return it->second;
  const auto id = static_cast<std::uint32_t>(tokens_.size());
  tokens_.emplace_back(token);
  ids_.emplace(tokens_.back(), id);
  return id;
}

std::optional<std::uint32_t> TokenIndex::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::size_t Dataset::n_actions() const {
  std::size_t n = 0;
  for (const auto& p : positives) n += p.size();
  return n;
}

bool Dataset::is_positive(UserId u, ItemId i) const {
  const auto& p = positives[u];
  return std::binary_search(p.begin(), p.end(), i);
}

void Dataset::validate() const {
  if (positives.size() != n_users()) throw std::logic_error("positives size differs from user count");
  if (producer_of.size() != n_items()) throw std::logic_error("producer_of size differs from item count");
  for (const auto& p : positives) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (p[k] >= n_items()) throw std::logic_error("positive item id out of range");
      if (k > 0 && p[k - 1] >= p[k]) throw std::logic_error("positives not strictly ascending");
    }
  }
  for (auto owner : producer_of) {
    if (owner >= n_users()) throw std::logic_error("producer id out of range");
  }
}

std::size_t Split::n_train_actions() const {
  std::size_t n = 0;
  for (const auto& t : train) n += t.size();
  return n;
}

double CorpusStats::mean_distinct_producer_ratio() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& pt : per_user) {
    if (pt.items == 0) continue;
    sum += static_cast<double>(pt.distinct_producers) / static_cast<double>(pt.items);
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

Dataset ingest(std::span<const RawInteraction> interactions, std::span<const ProducerRecord> producers) {
  std::unordered_map<std::string_view, std::string_view> owner_of;
  owner_of.reserve(producers.size());
  for (const auto& rec : producers) {
    if (rec.item_token.empty() || rec.user_token.empty()) {
      throw MalformedRecord(rec.item_token + "\t" + rec.user_token, "empty token");
    }
    auto [it, inserted] = owner_of.emplace(rec.item_token, rec.user_token);
    if (!inserted && it->second != rec.user_token) {
      throw MalformedRecord(rec.item_token + "\t" + rec.user_token, "conflicting producer");
    }
  }

  Dataset d;
  for (const auto& rec : interactions) {
    if (rec.user_token.empty() || rec.item_token.empty()) {
      throw MalformedRecord(rec.user_token + "\t" + rec.item_token, "empty token");
    }
    const UserId u = d.users.intern(rec.user_token);
    const ItemId i = d.items.intern(rec.item_token);
    if (u >= d.positives.size()) d.positives.resize(u + 1);
    d.positives[u].push_back(i);
  }

  // Producers that never consumed get ids after all consumers, in item order.
  d.producer_of.resize(d.n_items());
  for (ItemId i = 0; i < d.n_items(); ++i) {
    auto it = owner_of.find(d.items.token(i));
    if (it == owner_of.end()) throw MissingProducer(d.items.token(i));
    d.producer_of[i] = d.users.intern(it->second);
  }
  d.positives.resize(d.n_users());
  for (auto& p : d.positives) {
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
  }
  return d;
}

std::vector<RawInteraction> read_interactions(const fs::path& path) {
  std::vector<RawInteraction> out;
  for_each_record(path, [&](std::string_view line, std::span<const std::string_view> fields) {
    if (fields.size() < 2 || fields[0].empty() || fields[1].empty()) {
      throw MalformedRecord(std::string(line), "expected user<TAB>item");
    }
    out.push_back({std::string(fields[0]), std::string(fields[1])});
  });
  return out;
}

std::vector<ProducerRecord> read_producers(const fs::path& path) {
  std::vector<ProducerRecord> out;
  for_each_record(path, [&](std::string_view line, std::span<const std::string_view> fields) {
    if (fields.size() < 2 || fields[0].empty() || fields[1].empty()) {
      throw MalformedRecord(std::string(line), "expected item<TAB>user");
    }
    out.push_back({std::string(fields[0]), std::string(fields[1])});
  });
  return out;
}

Dataset filter_inactive(const Dataset& d, const FilterOptions& options) {
  if (options.min_actions < 1) throw std::invalid_argument("min_actions must be at least 1");
  auto positives = d.positives;
  std::vector<std::size_t> item_count(d.n_items());

  while (true) {
    bool removed = false;
    for (auto& p : positives) {
      if (!p.empty() && p.size() < options.min_actions) {
        p.clear();
        removed = true;
      }
    }
    std::fill(item_count.begin(), item_count.end(), 0);
    for (const auto& p : positives) {
      for (auto i : p) ++item_count[i];
    }
    for (auto& p : positives) {
      const auto before = p.size();
      std::erase_if(p, [&](ItemId i) { return item_count[i] < options.min_actions; });
      removed = removed || p.size() != before;
    }
    if (!options.iterate_to_fixpoint || !removed) break;
  }

  std::size_t n_actions = 0;
  std::vector<bool> keep_item(d.n_items());
  for (const auto& p : positives) {
    n_actions += p.size();
    for (auto i : p) keep_item[i] = true;
  }
  if (n_actions == 0) throw Error(ErrorCode::kEmptyAfterFilter, "no interactions survive the activity filter");

  std::vector<bool> keep_user(d.n_users());
  for (UserId u = 0; u < d.n_users(); ++u) keep_user[u] = !positives[u].empty();
  for (ItemId i = 0; i < d.n_items(); ++i) {
    if (keep_item[i]) keep_user[d.producer_of[i]] = true;
  }

  Dataset out;
  std::vector<UserId> user_map(d.n_users());
  std::vector<ItemId> item_map(d.n_items());
  for (UserId u = 0; u < d.n_users(); ++u) {
    if (keep_user[u]) user_map[u] = out.users.intern(d.users.token(u));
  }
  for (ItemId i = 0; i < d.n_items(); ++i) {
    if (!keep_item[i]) continue;
    item_map[i] = out.items.intern(d.items.token(i));
    out.producer_of.push_back(user_map[d.producer_of[i]]);
  }
  out.positives.resize(out.n_users());
  for (UserId u = 0; u < d.n_users(); ++u) {
    if (!keep_user[u]) continue;
    auto& dst = out.positives[user_map[u]];
    dst.reserve(positives[u].size());
    // Relative order is preserved by the remap, so dst stays sorted.
    for (auto i : positives[u]) dst.push_back(item_map[i]);
  }
  return out;
}

RolePartition role_partition(const Dataset& d) {
  RolePartition r;
  std::vector<bool> produces(d.n_users());
  for (auto owner : d.producer_of) produces[owner] = true;
  for (UserId u = 0; u < d.n_users(); ++u) {
    const bool consumes = !d.positives[u].empty();
    if (consumes) r.consumers.push_back(u);
    if (produces[u]) r.producers.push_back(u);
    if (consumes && produces[u]) r.prosumers.push_back(u);
  }
  return r;
}

Split split_leave_one_out(const Dataset& d, std::uint64_t seed) {
  Split s;
  s.seed = seed;
  s.train.resize(d.n_users());
  s.val.resize(d.n_users());
  s.test.resize(d.n_users());
  std::mt19937_64 rng(seed);
  for (UserId u = 0; u < d.n_users(); ++u) {
    const auto& pos = d.positives[u];
    if (pos.size() < 3) {
      s.train[u] = pos;
      continue;
    }
    const std::size_t n = pos.size();
    const std::size_t v = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    std::size_t t = std::uniform_int_distribution<std::size_t>(0, n - 2)(rng);
    if (t >= v) ++t;
    s.val[u] = pos[v];
    s.test[u] = pos[t];
    s.train[u].reserve(n - 2);
    for (std::size_t k = 0; k < n; ++k) {
      if (k != v && k != t) s.train[u].push_back(pos[k]);
    }
  }
  return s;
}

CorpusStats corpus_stats(const Dataset& d) {
  CorpusStats st;
  st.n_users = d.n_users();
  st.n_items = d.n_items();
  st.n_actions = d.n_actions();
  const auto roles = role_partition(d);
  if (st.n_users > 0) {
    const auto n = static_cast<double>(st.n_users);
    st.consumer_ratio = static_cast<double>(roles.consumers.size()) / n;
    st.producer_ratio = static_cast<double>(roles.producers.size()) / n;
    st.prosumer_ratio = static_cast<double>(roles.prosumers.size()) / n;
  }
  st.per_user.reserve(d.n_users());
  std::vector<UserId> owners;
  for (UserId u = 0; u < d.n_users(); ++u) {
    owners.clear();
    for (auto i : d.positives[u]) owners.push_back(d.producer_of[i]);
    std::sort(owners.begin(), owners.end());
    const auto distinct = static_cast<std::size_t>(std::unique(owners.begin(), owners.end()) - owners.begin());
    st.per_user.push_back({u, distinct, d.positives[u].size()});
  }
  return st;
}

namespace {

void write_pairs(const fs::path& path, const Dataset& d, const auto& rows_of) {
  std::ofstream out = open_output(path);
  for (UserId u = 0; u < d.n_users(); ++u) {
    rows_of(u, [&](ItemId i) { out << d.users.token(u) << '\t' << d.items.token(i) << '\n'; });
  }
}

struct IdPair {
  UserId user;
  ItemId item;
};

std::vector<IdPair> read_pairs(const fs::path& path, const Dataset& d) {
  std::vector<IdPair> out;
  for_each_record(path, [&](std::string_view line, std::span<const std::string_view> fields) {
    if (fields.size() < 2) throw MalformedRecord(std::string(line), "expected user<TAB>item");
    auto u = d.users.find(fields[0]);
    auto i = d.items.find(fields[1]);
    if (!u || !i) throw MalformedRecord(std::string(line), "unknown token in split file");
    out.push_back({*u, *i});
  });
  return out;
}

}  // namespace

void write_prepared(const fs::path& dir, const Dataset& d, const Split& split, const FilterOptions& filter) {
  fs::create_directories(dir);
  {
    std::ofstream out = open_output(dir / "users.txt");
    for (const auto& t : d.users.tokens()) out << t << '\n';
  }
  {
    std::ofstream out = open_output(dir / "items.tsv");
    for (ItemId i = 0; i < d.n_items(); ++i) {
      out << d.items.token(i) << '\t' << d.users.token(d.producer_of[i]) << '\n';
    }
  }
  write_pairs(dir / "train.tsv", d, [&](UserId u, auto emit) {
    for (auto i : split.train[u]) emit(i);
  });
  write_pairs(dir / "val.tsv", d, [&](UserId u, auto emit) {
    if (split.val[u]) emit(*split.val[u]);
  });
  write_pairs(dir / "test.tsv", d, [&](UserId u, auto emit) {
    if (split.test[u]) emit(*split.test[u]);
  });
  nlohmann::ordered_json j;
  j["seed"] = split.seed;
  j["min_actions"] = filter.min_actions;
  j["iterate_to_fixpoint"] = filter.iterate_to_fixpoint;
  j["n_users"] = d.n_users();
  j["n_items"] = d.n_items();
  j["n_actions"] = d.n_actions();
  std::ofstream out = open_output(dir / "prepared.json");
  out << j.dump(2) << '\n';
}

PreparedData read_prepared(const fs::path& dir) {
  PreparedData p;
  Dataset& d = p.dataset;
  for_each_record(dir / "users.txt", [&](std::string_view line, std::span<const std::string_view>) {
    d.users.intern(line);
  });
  for_each_record(dir / "items.tsv", [&](std::string_view line, std::span<const std::string_view> fields) {
    if (fields.size() < 2) throw MalformedRecord(std::string(line), "expected item<TAB>producer");
    auto owner = d.users.find(fields[1]);
    if (!owner) throw MalformedRecord(std::string(line), "unknown producer token");
    d.items.intern(fields[0]);
    d.producer_of.push_back(*owner);
  });
  const auto n_users = d.n_users();
  d.positives.assign(n_users, {});
  Split& s = p.split;
  s.train.assign(n_users, {});
  s.val.assign(n_users, std::nullopt);
  s.test.assign(n_users, std::nullopt);
  for (auto [u, i] : read_pairs(dir / "train.tsv", d)) s.train[u].push_back(i);
  for (auto [u, i] : read_pairs(dir / "val.tsv", d)) s.val[u] = i;
  for (auto [u, i] : read_pairs(dir / "test.tsv", d)) s.test[u] = i;
  for (UserId u = 0; u < n_users; ++u) {
    auto& pos = d.positives[u];
    pos = s.train[u];
    if (s.val[u]) pos.push_back(*s.val[u]);
    if (s.test[u]) pos.push_back(*s.test[u]);
    std::sort(pos.begin(), pos.end());
  }

  std::ifstream in(dir / "prepared.json");
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + (dir / "prepared.json").string());
  const auto j = nlohmann::json::parse(in);
  s.seed = j.at("seed").get<std::uint64_t>();
  p.filter.min_actions = j.at("min_actions").get<std::size_t>();
  p.filter.iterate_to_fixpoint = j.at("iterate_to_fixpoint").get<bool>();
  d.validate();
  return p;
}

}  // namespace cprec
