#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "cprec/checkpoint.hpp"
#include "cprec/cli.hpp"
#include "cprec/dataset.hpp"
#include "cprec/eval.hpp"
#include "cprec/models.hpp"
#include "cprec/synthetic.hpp"
#include "cprec/trainer.hpp"

namespace py = pybind11;
using namespace cprec;

namespace {

// Owns a parameter set together with the producer map it scores against.
struct Model {
  ModelParams params;
  std::vector<UserId> producer_of;
};

py::array_t<double> to_numpy(const Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) view(r, c) = m(r, c);
  }
  return out;
}

py::dict report_to_dict(const EvalReport& r) {
  py::dict d;
  d["auc_all"] = r.auc_all;
  d["auc_cold"] = r.auc_cold;
  d["n_eval_users"] = r.n_eval_users;
  d["n_cold_users"] = r.n_cold_users;
  d["n_without_target"] = r.n_without_target;
  d["mode"] = r.mode;
  return d;
}

py::list epochs_to_list(const TrainReport& r) {
  py::list rows;
  for (const auto& e : r.epochs) {
    py::dict row;
    row["epoch"] = e.epoch;
    row["loss"] = e.loss;
    row["val_auc"] = e.val_auc;
    row["seconds"] = e.seconds;
    rows.append(row);
  }
  return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Consumer/producer-aware recommendation: data preparation, training and AUC evaluation";

  py::register_exception<Error>(m, "CprecError", PyExc_RuntimeError);

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("n_users", &Dataset::n_users)
      .def_property_readonly("n_items", &Dataset::n_items)
      .def_property_readonly("n_actions", &Dataset::n_actions)
      .def_readonly("positives", &Dataset::positives)
      .def_readonly("producer_of", &Dataset::producer_of)
      .def_property_readonly("user_tokens", [](const Dataset& d) { return d.users.tokens(); })
      .def_property_readonly("item_tokens", [](const Dataset& d) { return d.items.tokens(); })
      .def("__repr__", [](const Dataset& d) {
        std::ostringstream s;
        s << "<Dataset users=" << d.n_users() << " items=" << d.n_items() << " actions=" << d.n_actions() << ">";
        return s.str();
      });

  py::class_<Split>(m, "Split")
      .def_readonly("train", &Split::train)
      .def_readonly("val", &Split::val)
      .def_readonly("test", &Split::test)
      .def_readonly("seed", &Split::seed)
      .def_property_readonly("n_train_actions", &Split::n_train_actions);

  m.def(
      "ingest",
      [](const std::vector<std::pair<std::string, std::string>>& interactions,
         const std::vector<std::pair<std::string, std::string>>& producers) {
        std::vector<RawInteraction> raw;
        for (const auto& [u, i] : interactions) raw.push_back({u, i});
        std::vector<ProducerRecord> prod;
        for (const auto& [i, u] : producers) prod.push_back({i, u});
        return ingest(raw, prod);
      },
      py::arg("interactions"), py::arg("producers"),
      "Build a dataset from (user, item) and (item, producer) token pairs.");
  m.def(
      "read_dataset",
      [](const std::filesystem::path& interactions, const std::filesystem::path& producers) {
        return ingest(read_interactions(interactions), read_producers(producers));
      },
      py::arg("interactions"), py::arg("producers"));
  m.def(
      "filter_inactive",
      [](const Dataset& d, std::size_t min_actions, bool fixpoint) {
        return filter_inactive(d, {min_actions, fixpoint});
      },
      py::arg("dataset"), py::arg("min_actions") = 10, py::arg("fixpoint") = false);
  m.def("split_leave_one_out", &split_leave_one_out, py::arg("dataset"), py::arg("seed"));
  m.def(
      "corpus_stats",
      [](const Dataset& d) {
        const auto st = corpus_stats(d);
        py::dict out;
        out["n_users"] = st.n_users;
        out["n_items"] = st.n_items;
        out["n_actions"] = st.n_actions;
        out["consumer_ratio"] = st.consumer_ratio;
        out["producer_ratio"] = st.producer_ratio;
        out["prosumer_ratio"] = st.prosumer_ratio;
        out["mean_distinct_producer_ratio"] = st.mean_distinct_producer_ratio();
        return out;
      },
      py::arg("dataset"));
  m.def(
      "read_prepared",
      [](const std::filesystem::path& dir) {
        auto p = read_prepared(dir);
        return py::make_tuple(std::move(p.dataset), std::move(p.split));
      },
      py::arg("directory"));
  m.def(
      "write_prepared",
      [](const std::filesystem::path& dir, const Dataset& d, const Split& s, std::size_t min_actions, bool fixpoint) {
        write_prepared(dir, d, s, {min_actions, fixpoint});
      },
      py::arg("directory"), py::arg("dataset"), py::arg("split"), py::arg("min_actions") = 10,
      py::arg("fixpoint") = false);

  py::class_<SynthConfig>(m, "SynthConfig")
      .def(py::init<>())
      .def_readwrite("n_users", &SynthConfig::n_users)
      .def_readwrite("n_items_per_producer", &SynthConfig::n_items_per_producer)
      .def_readwrite("k_true", &SynthConfig::k_true)
      .def_readwrite("appreciation_weight", &SynthConfig::appreciation_weight)
      .def_readwrite("noise", &SynthConfig::noise)
      .def_readwrite("mean_actions", &SynthConfig::mean_actions)
      .def_readwrite("sharpness", &SynthConfig::sharpness)
      .def_readwrite("seed", &SynthConfig::seed);
  m.def("generate_synthetic", &generate_synthetic, py::arg("config"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("k", &TrainConfig::k)
      .def_readwrite("lambda_", &TrainConfig::lambda)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("max_epochs", &TrainConfig::max_epochs)
      .def_readwrite("patience", &TrainConfig::patience)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("val_negatives", &TrainConfig::val_negatives)
      .def_readwrite("threads", &TrainConfig::threads);

  py::class_<Model>(m, "Model")
      .def_property_readonly("kind", [](const Model& mo) { return std::string(to_string(model_kind(mo.params))); })
      .def_property_readonly("k", [](const Model& mo) { return latent_dim(mo.params); })
      .def_property_readonly("parameter_count", [](const Model& mo) { return parameter_count(mo.params); })
      .def("tensors",
           [](const Model& mo) {
             py::dict out;
             for (const auto& [name, t] : named_tensors(mo.params)) out[py::str(std::string(name))] = to_numpy(*t);
             return out;
           })
      .def(
          "score", [](const Model& mo, UserId u, ItemId i) { return score(mo.params, u, i, mo.producer_of); },
          py::arg("user"), py::arg("item"))
      .def(
          "score_all",
          [](const Model& mo, UserId u) {
            const Scorer scorer(mo.params, mo.producer_of);
            py::array_t<double> out(static_cast<py::ssize_t>(scorer.n_items()));
            scorer.score_all(u, std::span<double>(out.mutable_data(), scorer.n_items()));
            return out;
          },
          py::arg("user"))
      .def(
          "save",
          [](const Model& mo, const std::filesystem::path& stem, std::uint64_t seed) {
            save_checkpoint(stem, mo.params, {seed});
          },
          py::arg("stem"), py::arg("seed") = 0);

  m.def(
      "init_model",
      [](const std::string& kind, const Dataset& d, std::size_t k, std::uint64_t seed) {
        return Model{init_params(parse_model_kind(kind), d.n_users(), d.n_items(), k, seed), d.producer_of};
      },
      py::arg("kind"), py::arg("dataset"), py::arg("k"), py::arg("seed") = 0);
  m.def(
      "load_model",
      [](const std::filesystem::path& stem, const Dataset& d) { return Model{load_checkpoint(stem).params, d.producer_of}; },
      py::arg("stem"), py::arg("dataset"));
  m.def(
      "train",
      [](const Dataset& d, const Split& s, const std::string& kind, const TrainConfig& cfg) {
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(d, s, parse_model_kind(kind), cfg);
        }
        py::object best = r.report.best_epoch ? py::cast(*r.report.best_epoch) : py::none();
        return py::make_tuple(Model{std::move(r.params), d.producer_of}, epochs_to_list(r.report), best);
      },
      py::arg("dataset"), py::arg("split"), py::arg("kind"), py::arg("config") = TrainConfig{},
      "Returns (model, per-epoch rows, best epoch or None).");
  m.def(
      "evaluate_auc",
      [](const Model& mo, const Dataset& d, const Split& s, std::size_t cold_threshold, std::size_t sampled_negatives,
         bool ties_half, bool validation, std::uint64_t seed) {
        EvalOptions o;
        o.cold_threshold = cold_threshold;
        o.sampled_negatives = sampled_negatives;
        o.ties_half = ties_half;
        o.target = validation ? EvalTarget::kValidation : EvalTarget::kTest;
        o.seed = seed;
        EvalReport r;
        {
          py::gil_scoped_release release;
          r = evaluate_auc(mo.params, d, s, o);
        }
        return report_to_dict(r);
      },
      py::arg("model"), py::arg("dataset"), py::arg("split"), py::arg("cold_threshold") = 5,
      py::arg("sampled_negatives") = 0, py::arg("ties_half") = false, py::arg("validation") = false,
      py::arg("seed") = 0);

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a cprec subcommand in-process; returns (exit code, stdout, stderr).");
}
