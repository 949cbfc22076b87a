#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "cli.hpp"
#include "tripletlens/checkpoint.hpp"
#include "tripletlens/datagen.hpp"
#include "tripletlens/dataset.hpp"
#include "tripletlens/embedding_store.hpp"
#include "tripletlens/error.hpp"
#include "tripletlens/eval.hpp"
#include "tripletlens/fewshot.hpp"
#include "tripletlens/graph.hpp"
#include "tripletlens/png_io.hpp"
#include "tripletlens/triplet.hpp"

namespace py = pybind11;
using namespace tl;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Aggregation parse_aggregation(const std::string& s) {
  if (s == "min") return Aggregation::Min;
  if (s == "mean") return Aggregation::Mean;
  throw ConfigError("aggregation must be 'min' or 'mean'");
}

py::dict metrics_dict(const Metrics& m) {
  py::list per_class;
  for (const ClassMetrics& c : m.per_class) {
    py::dict d;
    d["precision"] = c.precision;
    d["recall"] = c.recall;
    d["f1"] = c.f1;
    d["in_macro"] = c.in_macro;
    per_class.append(d);
  }
  py::dict out;
  out["per_class"] = per_class;
  out["macro_precision"] = m.macro_precision;
  out["macro_recall"] = m.macro_recall;
  out["macro_f1"] = m.macro_f1;
  out["accuracy"] = m.accuracy;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Triplet-loss embeddings with k-shot nearest-class evaluation";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  auto base = m.attr("Error");
  py::register_exception<DimensionError>(m, "DimensionError", base);
  py::register_exception<ContractViolation>(m, "ContractViolation", base);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<CheckpointError>(m, "CheckpointError", base);
  py::register_exception<SamplingError>(m, "SamplingError", base);
  py::register_exception<IndexError>(m, "IndexOutOfRangeError", base);
  py::register_exception<SupportError>(m, "SupportError", base);
  py::register_exception<LabelError>(m, "LabelError", base);
  py::register_exception<ProtocolError>(m, "ProtocolError", base);
  py::register_exception<LoadError>(m, "LoadError", base);
  py::register_exception<IoError>(m, "IoError", base);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a command line in-process; returns (exit_code, stdout, stderr).");

  m.def(
      "triplet_loss",
      [](const Array& a, const Array& p, const Array& n, double alpha) {
        nd::Graph g;
        return triplet_loss(g.input(to_tensor(a)), g.input(to_tensor(p)), g.input(to_tensor(n)), Margin(alpha))
            .item();
      },
      py::arg("anchor"), py::arg("positive"), py::arg("negative"), py::arg("alpha") = Margin::kDefault);

  m.def(
      "classify",
      [](const Array& queries, const std::vector<int>& classes, const std::vector<Array>& exemplars,
         const std::string& aggregation) {
        std::vector<Tensor> blocks;
        for (const Array& e : exemplars) blocks.push_back(to_tensor(e));
        const SupportSet support(classes, blocks);
        const Tensor q = to_tensor(queries);
        if (q.rank() != 2) throw DimensionError("queries must be [N, D]");
        const auto preds = classify_batch(q, support, parse_aggregation(aggregation));
        std::vector<int> labels;
        Tensor scores(Shape{preds.size(), classes.size()});
        for (std::size_t i = 0; i < preds.size(); ++i) {
          labels.push_back(preds[i].label);
          std::copy(preds[i].scores.begin(), preds[i].scores.end(), scores.data().begin() + i * classes.size());
        }
        return py::make_tuple(labels, to_array(scores));
      },
      py::arg("queries"), py::arg("classes"), py::arg("exemplars"), py::arg("aggregation") = "min",
      "Nearest-class k-shot rule. exemplars[c] is [k, D] for classes[c]; returns (labels, scores [N, C]).");

  m.def(
      "metrics",
      [](const std::vector<int>& truth, const std::vector<int>& predicted, std::size_t classes) {
        return metrics_dict(metrics(confusion(truth, predicted, classes)));
      },
      py::arg("truth"), py::arg("predicted"), py::arg("classes"));

  m.def(
      "k_sweep_csv",
      [](const Array& embeddings, const std::vector<int>& labels, const std::vector<std::size_t>& ks,
         std::size_t repeats, std::uint64_t seed, std::optional<int> unseen_class) {
        SweepOptions opt;
        opt.ks = ks;
        opt.repeats = repeats;
        opt.unseen_class = unseen_class;
        const auto reports = k_sweep(to_tensor(embeddings), labels, opt, Rng(seed));
        return report_csv(reports);
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("ks") = std::vector<std::size_t>{1, 3, 5, 7, 9},
      py::arg("repeats") = 5, py::arg("seed") = 0, py::arg("unseen_class") = py::none(),
      "Runs the k-shot sweep and returns the report CSV text.");

  m.def(
      "generate_dataset",
      [](const std::filesystem::path& out, std::size_t n_per_class, std::size_t size, std::uint64_t seed,
         bool unseen_protocol) {
        return generate_dataset(out, n_per_class, size, seed, unseen_protocol).records.size();
      },
      py::arg("out_dir"), py::arg("n_per_class") = kDefaultPerClass, py::arg("size") = kDefaultImageSize,
      py::arg("seed") = 0, py::arg("unseen_protocol") = false, "Writes a synthetic dataset; returns the record count.");

  m.def(
      "load_dataset",
      [](const std::filesystem::path& manifest) {
        const Dataset d = load_dataset(manifest);
        std::vector<std::string> splits;
        for (Split s : d.splits) splits.push_back(to_string(s));
        return py::make_tuple(to_array(d.all_images()), d.labels, splits, d.ids);
      },
      py::arg("manifest"), "Returns (images [N,3,S,S], labels, splits, ids).");

  m.def("read_png", [](const std::filesystem::path& p) { return to_array(read_png(p)); }, py::arg("path"));
  m.def(
      "write_png", [](const std::filesystem::path& p, const Array& img) { write_png(p, to_tensor(img)); },
      py::arg("path"), py::arg("image"));

  m.def(
      "read_embeddings",
      [](const std::filesystem::path& p) {
        const auto recs = read_embeddings(p);
        std::vector<std::string> ids;
        std::vector<std::optional<int>> labels;
        for (const auto& r : recs) {
          ids.push_back(r.id);
          labels.push_back(r.label);
        }
        return py::make_tuple(ids, labels, to_array(stack_embeddings(recs)));
      },
      py::arg("path"), "Returns (ids, labels, vectors [N, D]).");

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); }, py::arg("path"))
      .def("save", [](const Checkpoint& c, const std::filesystem::path& p) { save_checkpoint(c, p); },
           py::arg("path"))
      .def_property_readonly("arch", [](const Checkpoint& c) { return c.net.preset().name; })
      .def_property_readonly("mode", [](const Checkpoint& c) { return to_string(c.meta.mode); })
      .def_property_readonly("input_size", [](const Checkpoint& c) { return c.net.input_size(); })
      .def_property_readonly("output_dim", [](const Checkpoint& c) { return c.net.output_dim(); })
      .def_property_readonly("trained_classes", [](const Checkpoint& c) { return c.meta.trained_classes; })
      .def_property_readonly("parameter_count", [](const Checkpoint& c) { return c.net.parameter_count(); })
      .def(
          "embed",
          [](const Checkpoint& c, const Array& images) {
            const Tensor batch = to_tensor(images);
            Tensor out;
            {
              py::gil_scoped_release release;
              out = c.net.embed(batch);
            }
            return to_array(out);
          },
          py::arg("images"), "Maps [N,3,S,S] images to [N,D] outputs.");
}
