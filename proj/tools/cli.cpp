#include "cprec/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <type_traits>

#include <CLI11.hpp>

#include "cprec/checkpoint.hpp"
#include "cprec/dataset.hpp"
#include "cprec/eval.hpp"
#include "cprec/manifest.hpp"
#include "cprec/synthetic.hpp"
#include "cprec/text_io.hpp"
#include "cprec/trainer.hpp"

#ifndef CPREC_VERSION
#define CPREC_VERSION "0.0.0"
#endif

namespace cprec::cli {

namespace {

namespace fs = std::filesystem;

std::string env_name(std::string_view option) {
  std::string name = "CPREC_";
  for (char c : option) name += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return name;
}

template <class T>
struct is_vector : std::false_type {};
template <class T>
struct is_vector<std::vector<T>> : std::true_type {};

template <class T>
std::string render(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, double>) {
    return format_double(v);
  } else if constexpr (std::is_integral_v<T>) {
    return std::to_string(v);
  } else if constexpr (std::is_same_v<T, fs::path>) {
    return v.empty() ? std::string() : fs::absolute(v).lexically_normal().string();
  } else if constexpr (is_vector<T>::value) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ",") + render(x);
    return s;
  } else {
    return v;
  }
}

// Registers options on a subcommand and keeps a printer for each so the
// effective configuration can be written to the run manifest.
class Options {
 public:
  explicit Options(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_, "key=value file; flags and CPREC_* variables take precedence");
  }

  template <class T>
  CLI::Option* add(const std::string& name, T& var, const std::string& help) {
    CLI::Option* opt = app_->add_option("--" + name, var, help)->envname(env_name(name))->capture_default_str();
    if constexpr (is_vector<T>::value) opt->delimiter(',');
    printers_.emplace_back(name, [&var] { return render(var); });
    return opt;
  }

  CLI::Option* flag(const std::string& name, bool& var, const std::string& help) {
    CLI::Option* opt = app_->add_flag("--" + name, var, help)->envname(env_name(name));
    printers_.emplace_back(name, [&var] { return render(var); });
    return opt;
  }

  std::vector<std::pair<std::string, std::string>> snapshot() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [name, print] : printers_) out.emplace_back(name, print());
    return out;
  }

 private:
  CLI::App* app_;
  std::string config_;
  std::vector<std::pair<std::string, std::function<std::string()>>> printers_;
};

// State shared by a command body and the manifest writer.
struct Run {
  std::ostream& out;
  fs::path out_dir;
  std::vector<fs::path> inputs;
  std::vector<std::string> outputs;
  std::vector<std::string> volatile_outputs;
  std::vector<std::pair<std::string, std::uint64_t>> seeds;

  fs::path output(const std::string& name) {
    outputs.push_back(name);
    return out_dir / name;
  }
  fs::path volatile_output(const std::string& name) {
    volatile_outputs.push_back(name);
    return out_dir / name;
  }
  void prepared_inputs(const fs::path& dir) {
    for (auto name : kPreparedFiles) inputs.push_back(dir / name);
  }
};

struct Command {
  std::string name;
  CLI::App* app = nullptr;
  std::unique_ptr<Options> options;
  fs::path out_dir;
  std::function<void(Run&)> body;
};

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
}

std::string stats_table(const CorpusStats& st) {
  std::ostringstream t;
  t << "statistic\tvalue\n";
  t << "users\t" << st.n_users << '\n';
  t << "items\t" << st.n_items << '\n';
  t << "actions\t" << st.n_actions << '\n';
  t << "consumer_ratio\t" << format_double(st.consumer_ratio) << '\n';
  t << "producer_ratio\t" << format_double(st.producer_ratio) << '\n';
  t << "prosumer_ratio\t" << format_double(st.prosumer_ratio) << '\n';
  t << "mean_distinct_producer_ratio\t" << format_double(st.mean_distinct_producer_ratio()) << '\n';
  return t.str();
}

std::string scatter_table(const CorpusStats& st, const Dataset& d) {
  std::ostringstream t;
  t << "user\tdistinct_producers\titems\n";
  for (const auto& p : st.per_user) {
    if (p.items == 0) continue;
    t << d.users.token(p.user) << '\t' << p.distinct_producers << '\t' << p.items << '\n';
  }
  return t.str();
}

void check_dimensions(const ModelParams& params, const Dataset& d) {
  const bool users_ok = n_users(params) == 0 || n_users(params) == d.n_users();
  if (n_items(params) != d.n_items() || !users_ok) {
    throw Error(ErrorCode::kDimensionMismatch,
                "checkpoint has " + std::to_string(n_users(params)) + " users x " + std::to_string(n_items(params)) +
                    " items, data has " + std::to_string(d.n_users()) + " x " + std::to_string(d.n_items()));
  }
}

ProjectionInit parse_projection_init(const std::string& s) {
  if (s == "near-identity") return ProjectionInit::kNearIdentity;
  if (s == "identity") return ProjectionInit::kIdentity;
  return ProjectionInit::kNoise;
}

// Training knobs shared by train and sweep.
struct TrainFlags {
  std::size_t k = 20;
  double lr = 0.01;
  std::size_t batch = 10000;
  std::size_t epochs = 200;
  double lambda = 0.01;
  std::size_t patience = 10;
  std::size_t val_negatives = 0;
  std::string init = "near-identity";

  void add_to(Options& o, bool with_k_and_lambda) {
    if (with_k_and_lambda) {
      o.add("k", k, "latent dimensionality")->check(CLI::PositiveNumber);
      o.add("lambda", lambda, "L2 regularization weight")->check(CLI::NonNegativeNumber);
    }
    o.add("lr", lr, "Adam learning rate")->check(CLI::PositiveNumber);
    o.add("batch", batch, "triples per minibatch")->check(CLI::PositiveNumber);
    o.add("epochs", epochs, "maximum epochs");
    o.add("patience", patience, "epochs without validation improvement before stopping");
    o.add("val-negatives", val_negatives, "sampled negatives for validation AUC, 0 = exact");
    o.add("init", init, "CPRec projection init")->check(CLI::IsMember({"near-identity", "identity", "noise"}));
  }

  TrainConfig config(std::uint64_t seed, std::size_t threads) const {
    TrainConfig c;
    c.k = k;
    c.lambda = lambda;
    c.learning_rate = lr;
    c.batch_size = batch;
    c.max_epochs = epochs;
    c.patience = patience;
    c.seed = seed;
    c.val_negatives = val_negatives;
    c.threads = threads;
    c.projection_init = parse_projection_init(init);
    return c;
  }
};

struct Common {
  std::uint64_t seed = 42;
  std::size_t threads = 0;

  void add_to(Options& o) {
    o.add("seed", seed, "random seed");
    o.add("threads", threads, "worker threads, 0 = all cores");
  }
};

// --- subcommands ---------------------------------------------------------

Command make_prepare(CLI::App& app) {
  struct State {
    fs::path interactions, producers;
    std::size_t min_actions = 10;
    bool fixpoint = false;
    Common common;
  };
  auto s = std::make_shared<State>();
  Command c{"prepare", app.add_subcommand("prepare", "ingest, filter and split raw logs"), nullptr, {}, {}};
  c.options = std::make_unique<Options>(c.app);
  c.options->add("interactions", s->interactions, "user<TAB>item log")->required()->check(CLI::ExistingFile);
  c.options->add("producers", s->producers, "item<TAB>producer map")->required()->check(CLI::ExistingFile);
  c.options->add("min-actions", s->min_actions, "drop users and items with fewer interactions");
  c.options->flag("fixpoint", s->fixpoint, "repeat filtering until nothing changes");
  s->common.add_to(*c.options);
  c.body = [s](Run& run) {
    run.inputs = {s->interactions, s->producers};
    run.seeds = {{"split", s->common.seed}};
    const auto raw = ingest(read_interactions(s->interactions), read_producers(s->producers));
    const FilterOptions filter{s->min_actions, s->fixpoint};
    const Dataset d = filter_inactive(raw, filter);
    const Split split = split_leave_one_out(d, s->common.seed);
    write_prepared(run.out_dir, d, split, filter);
    for (auto name : kPreparedFiles) run.outputs.emplace_back(name);
    run.out << stats_table(corpus_stats(d));
  };
  return c;
}

Command make_train(CLI::App& app) {
  struct State {
    fs::path data;
    std::string model = "cprec";
    TrainFlags train;
    Common common;
  };
  auto s = std::make_shared<State>();
  Command c{"train", app.add_subcommand("train", "fit one model and write its best checkpoint"), nullptr, {}, {}};
  c.options = std::make_unique<Options>(c.app);
  c.options->add("data", s->data, "prepared data directory")->required()->check(CLI::ExistingDirectory);
  c.options->add("model", s->model, "poprec, bpr, fm, vista or cprec");
  s->train.add_to(*c.options, true);
  s->common.add_to(*c.options);
  c.body = [s](Run& run) {
    const ModelKind kind = parse_model_kind(s->model);
    const auto prepared = read_prepared(s->data);
    run.prepared_inputs(s->data);
    run.seeds = {{"train", s->common.seed}};
    const auto result = train(prepared.dataset, prepared.split, kind, s->train.config(s->common.seed, s->common.threads));
    save_checkpoint(run.out_dir / "model", result.params, {s->common.seed});
    run.outputs.emplace_back("model.json");
    run.outputs.emplace_back("model.bin");
    write_text(run.output("train_report.csv"), result.report.to_csv(false));
    std::ostringstream timing;
    timing << "epoch,seconds\n";
    for (const auto& e : result.report.epochs) timing << e.epoch << ',' << format_double(e.seconds) << '\n';
    write_text(run.volatile_output("timing.csv"), timing.str());
    run.out << "model " << to_string(kind) << ", epochs " << result.report.epochs.size();
    if (result.report.best_epoch) {
      const auto& best = result.report.epochs[*result.report.best_epoch - 1];
      run.out << ", best epoch " << best.epoch << " (val auc " << format_double(best.val_auc) << ")";
    }
    run.out << '\n';
  };
  return c;
}

Command make_eval(CLI::App& app) {
  struct State {
    fs::path data, checkpoint;
    std::size_t cold_threshold = 5;
    std::string mode = "exact";
    std::size_t negatives = 100;
    std::string target = "test";
    bool ties_half = false;
    bool per_user = false;
    Common common;
  };
  auto s = std::make_shared<State>();
  Command c{"eval", app.add_subcommand("eval", "AUC of a checkpoint on all and cold users"), nullptr, {}, {}};
  c.options = std::make_unique<Options>(c.app);
  c.options->add("data", s->data, "prepared data directory")->required()->check(CLI::ExistingDirectory);
  c.options->add("checkpoint", s->checkpoint, "checkpoint stem (without .json/.bin)")->required();
  c.options->add("cold-threshold", s->cold_threshold, "cold users have fewer training items than this");
  c.options->add("mode", s->mode, "exact or sampled")->check(CLI::IsMember({"exact", "sampled"}));
  c.options->add("negatives", s->negatives, "negatives per user in sampled mode")->check(CLI::PositiveNumber);
  c.options->add("target", s->target, "held-out item to rank")->check(CLI::IsMember({"test", "val"}));
  c.options->flag("ties-half", s->ties_half, "count score ties as one half");
  c.options->flag("per-user", s->per_user, "also write per_user.tsv");
  s->common.add_to(*c.options);
  c.body = [s](Run& run) {
    const auto prepared = read_prepared(s->data);
    run.prepared_inputs(s->data);
    run.inputs.push_back(s->checkpoint.string() + ".json");
    run.inputs.push_back(s->checkpoint.string() + ".bin");
    run.seeds = {{"eval", s->common.seed}};
    const auto ckpt = load_checkpoint(s->checkpoint);
    check_dimensions(ckpt.params, prepared.dataset);
    EvalOptions opts;
    opts.cold_threshold = s->cold_threshold;
    opts.sampled_negatives = s->mode == "sampled" ? s->negatives : 0;
    opts.ties_half = s->ties_half;
    opts.target = s->target == "val" ? EvalTarget::kValidation : EvalTarget::kTest;
    opts.seed = s->common.seed;
    opts.threads = s->common.threads;
    opts.keep_per_user = s->per_user;
    const auto report = evaluate_auc(ckpt.params, prepared.dataset, prepared.split, opts);
    write_text(run.output("eval_report.txt"), report.to_text());
    if (s->per_user) write_text(run.output("per_user.tsv"), report.per_user_tsv(prepared.dataset));
    run.out << report.to_text();
  };
  return c;
}

Command make_sweep(CLI::App& app) {
  struct State {
    fs::path data;
    std::vector<std::string> models = {"poprec", "bpr", "fm", "vista", "cprec"};
    std::vector<std::size_t> k_list = {10, 20, 30, 40};
    std::vector<double> lambda_grid = {0.001, 0.01, 0.1, 1.0};
    std::size_t cold_threshold = 5;
    TrainFlags train;
    Common common;
  };
  auto s = std::make_shared<State>();
  Command c{"sweep", app.add_subcommand("sweep", "grid-search lambda per (model, K) and test the winners"), nullptr,
            {}, {}};
  c.options = std::make_unique<Options>(c.app);
  c.options->add("data", s->data, "prepared data directory")->required()->check(CLI::ExistingDirectory);
  c.options->add("models", s->models, "comma-separated model names");
  c.options->add("k-list", s->k_list, "comma-separated latent dimensionalities");
  c.options->add("lambda-grid", s->lambda_grid, "comma-separated regularization weights");
  c.options->add("cold-threshold", s->cold_threshold, "cold users have fewer training items than this");
  s->train.add_to(*c.options, false);
  s->common.add_to(*c.options);
  c.body = [s](Run& run) {
    std::vector<ModelKind> kinds;
    for (const auto& m : s->models) kinds.push_back(parse_model_kind(m));
    const auto prepared = read_prepared(s->data);
    run.prepared_inputs(s->data);
    run.seeds = {{"train", s->common.seed}};
    EvalOptions eval;
    eval.cold_threshold = s->cold_threshold;
    eval.threads = s->common.threads;
    eval.seed = s->common.seed;
    const auto rows = k_sweep(prepared.dataset, prepared.split, kinds, s->k_list,
                              s->train.config(s->common.seed, s->common.threads), s->lambda_grid, eval);
    const auto csv = sweep_to_csv(rows);
    write_text(run.output("sweep.csv"), csv);
    run.out << csv;
  };
  return c;
}

Command make_stats(CLI::App& app) {
  struct State {
    fs::path data;
  };
  auto s = std::make_shared<State>();
  Command c{"stats", app.add_subcommand("stats", "corpus summary and consumption scatter data"), nullptr, {}, {}};
  c.options = std::make_unique<Options>(c.app);
  c.options->add("data", s->data, "prepared data directory")->required()->check(CLI::ExistingDirectory);
  c.body = [s](Run& run) {
    const auto prepared = read_prepared(s->data);
    run.prepared_inputs(s->data);
    const auto st = corpus_stats(prepared.dataset);
    const auto table = stats_table(st);
    write_text(run.output("stats.tsv"), table);
    write_text(run.output("scatter.tsv"), scatter_table(st, prepared.dataset));
    run.out << table;
  };
  return c;
}

Command make_synth(CLI::App& app) {
  struct State {
    SynthConfig cfg;
  };
  auto s = std::make_shared<State>();
  Command c{"synth", app.add_subcommand("synth", "generate a synthetic closed-loop corpus"), nullptr, {}, {}};
  c.options = std::make_unique<Options>(c.app);
  auto& cfg = s->cfg;
  c.options->add("users", cfg.n_users, "number of users")->check(CLI::PositiveNumber);
  c.options->add("items-per-producer", cfg.n_items_per_producer, "items owned by each user")
      ->check(CLI::PositiveNumber);
  c.options->add("k-true", cfg.k_true, "latent dimensionality of the generator")->check(CLI::PositiveNumber);
  c.options->add("appreciation", cfg.appreciation_weight, "weight of producer affinity")->check(CLI::Range(0.0, 1.0));
  c.options->add("noise", cfg.noise, "std-dev of logit noise")->check(CLI::NonNegativeNumber);
  c.options->add("mean-actions", cfg.mean_actions, "mean items consumed per user")->check(CLI::PositiveNumber);
  c.options->add("sharpness", cfg.sharpness, "softmax sharpness")->check(CLI::NonNegativeNumber);
  c.options->add("seed", cfg.seed, "random seed");
  c.body = [s](Run& run) {
    run.seeds = {{"synth", s->cfg.seed}};
    const auto corpus = generate_synthetic_corpus(s->cfg);
    {
      auto out = open_output(run.output("interactions.tsv"));
      for (const auto& r : corpus.interactions) out << r.user_token << '\t' << r.item_token << '\n';
    }
    {
      auto out = open_output(run.output("producers.tsv"));
      for (const auto& r : corpus.producers) out << r.item_token << '\t' << r.user_token << '\n';
    }
    run.out << stats_table(corpus_stats(ingest(corpus.interactions, corpus.producers)));
  };
  return c;
}

// --- driver --------------------------------------------------------------

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingProducer:
    case ErrorCode::kMalformedRecord:
      return kBadInput;
    case ErrorCode::kEmptyAfterFilter:
      return kEmptyAfterFilter;
    case ErrorCode::kNonFiniteLoss:
      return kNonFiniteLoss;
    case ErrorCode::kDimensionMismatch:
      return kDimensionMismatch;
    case ErrorCode::kIo:
      return kIoError;
    default:
      return kFailure;
  }
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool mentions(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

// Inlines `--config FILE` entries as `--key=value` arguments right after the
// subcommand name, skipping keys already given as flags or environment variables.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path);
  std::vector<std::string> injected;
  std::string line;
  while (std::getline(in, line)) {
    const auto text = trim(line);
    if (text.empty() || text[0] == '#' || text[0] == ';') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line without '=': " + text);
    const auto key = trim(std::string_view(text).substr(0, eq));
    const auto value = trim(std::string_view(text).substr(eq + 1));
    if (mentions(args, "--" + key) || std::getenv(env_name(key).c_str()) != nullptr) continue;
    injected.push_back("--" + key + "=" + value);
  }
  std::vector<std::string> out{args.front()};
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

void digest_all(RunManifest& m, const Run& run) {
  for (const auto& p : run.inputs) m.inputs.push_back({render(p), sha256_file(p)});
  for (const auto& name : run.outputs) m.outputs.push_back({name, sha256_file(run.out_dir / name)});
  m.volatile_outputs = run.volatile_outputs;
}

int replay(const fs::path& manifest_path, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  const auto recorded = RunManifest::load(manifest_path);
  if (recorded.tool_version != CPREC_VERSION) {
    err << "warning: manifest written by cprec " << recorded.tool_version << ", replaying with " << CPREC_VERSION
        << '\n';
  }
  bool inputs_ok = true;
  for (const auto& f : recorded.inputs) {
    if (!fs::exists(f.path)) {
      err << "input missing: " << f.path << '\n';
      inputs_ok = false;
    } else if (sha256_file(f.path) != f.sha256) {
      err << "input changed: " << f.path << '\n';
      inputs_ok = false;
    }
  }
  if (!inputs_ok) return kNotReproducible;

  std::vector<std::string> args{recorded.command};
  for (const auto& [key, value] : recorded.config) {
    args.push_back("--" + key + "=" + (key == "out" ? render(out_dir) : value));
  }
  if (!mentions(args, "--out")) args.push_back("--out=" + render(out_dir));
  std::ostringstream quiet;
  if (const int code = run(args, quiet, err); code != kOk) return code;

  const auto fresh = RunManifest::load(out_dir / "manifest.json");
  bool same = fresh.outputs.size() == recorded.outputs.size();
  for (const auto& f : recorded.outputs) {
    const auto it = std::find_if(fresh.outputs.begin(), fresh.outputs.end(),
                                 [&](const FileDigest& g) { return g.path == f.path; });
    const bool match = it != fresh.outputs.end() && it->sha256 == f.sha256;
    out << (match ? "identical " : "differs   ") << f.path << '\n';
    same = same && match;
  }
  out << (same ? "reproducible\n" : "not reproducible\n");
  return same ? kOk : kNotReproducible;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  try {
    const auto args = raw_args.empty() ? raw_args : expand_config(raw_args);

    CLI::App app{"Consumer/producer-aware recommendation toolkit", "cprec"};
    app.set_version_flag("--version", CPREC_VERSION);
    app.require_subcommand(1);
    std::vector<Command> commands;
    commands.push_back(make_prepare(app));
    commands.push_back(make_train(app));
    commands.push_back(make_eval(app));
    commands.push_back(make_sweep(app));
    commands.push_back(make_stats(app));
    commands.push_back(make_synth(app));
    for (auto& c : commands) {
      c.options->add("out", c.out_dir, "output directory")->required();
    }
    fs::path manifest_path, replay_out;
    auto* replay_cmd = app.add_subcommand("replay", "re-run a recorded command and compare output digests");
    replay_cmd->add_option("--manifest", manifest_path, "manifest.json of the original run")
        ->required()
        ->check(CLI::ExistingFile);
    replay_cmd->add_option("--out", replay_out, "directory for the replayed outputs")->required();

    try {
      std::vector<std::string> reversed(args.rbegin(), args.rend());
      app.parse(reversed);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kOk : kFailure;
    }

    if (replay_cmd->parsed()) return replay(manifest_path, replay_out, out, err);

    for (auto& c : commands) {
      if (!c.app->parsed()) continue;
      RunManifest manifest;
      manifest.tool_version = CPREC_VERSION;
      manifest.command = c.name;
      manifest.args = raw_args;
      manifest.started_at = utc_timestamp();
      fs::create_directories(c.out_dir);
      Run run{out, c.out_dir, {}, {}, {}, {}};
      c.body(run);
      manifest.config = c.options->snapshot();
      manifest.seeds = run.seeds;
      digest_all(manifest, run);
      manifest.finished_at = utc_timestamp();
      manifest.save(c.out_dir / "manifest.json");
      return kOk;
    }
    return kFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace cprec::cli
