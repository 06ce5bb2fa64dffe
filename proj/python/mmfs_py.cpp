#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <string>
#include <vector>

#include "json.hpp"

#include "mmfs/core/error.hpp"
#include "mmfs/episodes/manifest.hpp"
#include "mmfs/episodes/synthetic.hpp"
#include "mmfs/fewshot/protonet.hpp"
#include "mmfs/fusion/fusion.hpp"
#include "mmfs/harness/checkpoint.hpp"
#include "mmfs/harness/config.hpp"
#include "mmfs/harness/evaluate.hpp"
#include "mmfs/harness/export.hpp"
#include "mmfs/harness/trainer.hpp"
#include "mmfs/losses/losses.hpp"
#include "mmfs/tensor/ops.hpp"
#include "mmfs/tensor/tensor.hpp"

namespace py = pybind11;
using namespace mmfs;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  const auto values = t.to_vector();
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

py::dict summary_dict(const AccuracySummary& s) {
  py::dict d;
  d["mean"] = s.mean;
  d["ci95"] = s.ci95;
  d["episodes"] = s.episodes;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-modal few-shot learning core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());

  py::class_<DatasetManifest>(m, "Dataset")
      .def("__len__", &DatasetManifest::size)
      .def_property_readonly("classes", &DatasetManifest::classes)
      .def_property_readonly("sentences_per_item", &DatasetManifest::sentences_per_item)
      .def_property_readonly("image_shape", &DatasetManifest::image_shape)
      .def("split_classes",
           [](const DatasetManifest& d, const std::string& split) { return d.split_classes(parse_split(split)); })
      .def("item",
           [](const DatasetManifest& d, std::size_t i) {
             const MultiModalItem& item = d.item(i);
             std::vector<py::ssize_t> shape(item.image_shape.begin(), item.image_shape.end());
             py::array_t<float> image(shape);
             std::copy(item.image.begin(), item.image.end(), image.mutable_data());
             py::dict out;
             out["class"] = item.class_name;
             out["image"] = image;
             out["sentences"] = item.sentences;
             return out;
           })
      .def("save", [](const DatasetManifest& d, const std::filesystem::path& path) { save_manifest(d, path); });

  m.def(
      "generate_synthetic",
      [](const std::string& spec_json) {
        return generate_synthetic(synthetic_spec_from_json(nlohmann::json::parse(spec_json)));
      },
      py::arg("spec_json"), "Synthetic dataset from a JSON spec.");
  m.def("load_manifest", &load_manifest, py::arg("path"));

  m.def(
      "train",
      [](const std::string& config_json) {
        const RunConfig config = run_config_from_json(nlohmann::json::parse(config_json));
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(config);
        }
        py::dict out;
        out["output_dir"] = r.output_dir.string();
        out["best_epoch"] = r.best_epoch;
        out["best_val_accuracy"] = r.best_val_accuracy;
        out["parameter_count"] = r.parameter_count;
        out["test"] = r.test ? py::object(summary_dict(*r.test)) : py::none();
        return out;
      },
      py::arg("config_json"), "Episodic training from a JSON run config.");

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& manifest, const std::string& split,
         std::size_t episodes, std::uint64_t seed) {
        EvaluationResult r;
        {
          py::gil_scoped_release release;
          r = evaluate_checkpoint(checkpoint, manifest, parse_split(split), episodes, seed);
        }
        py::dict out = summary_dict(r.summary);
        out["accuracies"] = py::array_t<double>(static_cast<py::ssize_t>(r.accuracies.size()), r.accuracies.data());
        return out;
      },
      py::arg("checkpoint"), py::arg("manifest"), py::arg("split") = "meta_test", py::arg("episodes") = 600,
      py::arg("seed") = 0);

  m.def(
      "export_embeddings",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& manifest, const std::string& split,
         std::size_t classes, std::size_t per_class, std::uint64_t seed) {
        const LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
        const DatasetManifest data = load_manifest(manifest);
        PrecisionScope precision(ckpt.header.precision);
        const auto rows = collect_embeddings(*ckpt.model, data, ExportSpec{parse_split(split), classes, per_class, seed});
        const std::size_t d = rows.empty() ? 0 : rows.front().embedding.size();
        Array embeddings({static_cast<py::ssize_t>(rows.size()), static_cast<py::ssize_t>(d)});
        std::vector<std::string> names;
        std::vector<std::size_t> items;
        for (std::size_t i = 0; i < rows.size(); ++i) {
          names.push_back(rows[i].class_name);
          items.push_back(rows[i].item);
          std::copy(rows[i].embedding.begin(), rows[i].embedding.end(), embeddings.mutable_data() + i * d);
        }
        return py::make_tuple(names, items, embeddings);
      },
      py::arg("checkpoint"), py::arg("manifest"), py::arg("split") = "meta_test", py::arg("classes") = 10,
      py::arg("per_class") = 10, py::arg("seed") = 0, "Returns (class names, item indices, embeddings).");

  m.def(
      "protonet_logits",
      [](const Array& support, std::vector<int> support_labels, const Array& query, std::size_t ways) {
        const Tensor prototypes = class_prototypes(to_tensor(support), support_labels, ways);
        return to_array(neg(pairwise_sq_dist(to_tensor(query), prototypes)));
      },
      py::arg("support"), py::arg("support_labels"), py::arg("query"), py::arg("ways"),
      "Negative squared distances of queries to class prototypes.");

  m.def(
      "attention_kernel",
      [](const Array& q, const Array& k, const Array& v) {
        const AttentionOutput out = attention_kernel(to_tensor(q), to_tensor(k), to_tensor(v));
        return py::make_tuple(to_array(out.attended), to_array(out.weights));
      },
      py::arg("queries"), py::arg("keys"), py::arg("values"));

  m.def(
      "matching_loss",
      [](const Array& image, const Array& text, double temperature) {
        const MatchingLoss l = matching_loss(to_tensor(image), to_tensor(text), temperature);
        py::dict out;
        out["image_to_text"] = l.image_to_text.item();
        out["text_to_image"] = l.text_to_image.item();
        out["combined"] = l.combined.item();
        out["similarity"] = to_array(l.similarity);
        return out;
      },
      py::arg("image"), py::arg("text"), py::arg("temperature") = 1.0);

  m.def(
      "summarize_accuracies",
      [](const Array& accuracies) {
        return summary_dict(summarize_accuracies(std::span<const double>(accuracies.data(), accuracies.size())));
      },
      py::arg("accuracies"), "Mean and ci95 (percent) of per-episode accuracy fractions.");

  m.def(
      "set_precision", [](const std::string& p) { set_precision(parse_precision(p)); }, py::arg("precision"));
}
