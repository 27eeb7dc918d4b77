#include "pcnst/dataset.hpp"
#include "pcnst/error.hpp"
#include "pcnst/image.hpp"
#include "pcnst/io.hpp"
#include "pcnst/network.hpp"
#include "pcnst/training.hpp"
#include "pcnst/transfer.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace pcnst;

PYBIND11_MODULE(_core, m) {
    m.doc() = "Colored point cloud classification and neural style transfer";

    auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ShapeError>(m, "ShapeError", error.ptr());
    py::register_exception<ParseError>(m, "ParseError", error.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
    py::register_exception<NumericError>(m, "NumericError", error.ptr());
    py::register_exception<IoError>(m, "IoError", error.ptr());

    py::enum_<Fusion>(m, "Fusion").value("late", Fusion::late).value("early", Fusion::early);
    py::enum_<LayerKind>(m, "LayerKind")
        .value("fel", LayerKind::fel)
        .value("shared_fc", LayerKind::shared_fc);
    py::enum_<RouteKind>(m, "RouteKind")
        .value("geometry", RouteKind::geometry)
        .value("color", RouteKind::color)
        .value("fused", RouteKind::fused);
    py::enum_<GramNormalization>(m, "GramNormalization")
        .value("none", GramNormalization::none)
        .value("per_point", GramNormalization::per_point);
    py::enum_<UpdateMask>(m, "UpdateMask")
        .value("geometry", UpdateMask::geometry)
        .value("color", UpdateMask::color)
        .value("both", UpdateMask::both);
    py::enum_<InitStrategy>(m, "InitStrategy")
        .value("content", InitStrategy::content)
        .value("gaussian", InitStrategy::gaussian);
    py::enum_<OptimizerKind>(m, "OptimizerKind")
        .value("sgd", OptimizerKind::sgd)
        .value("momentum", OptimizerKind::momentum)
        .value("adagrad", OptimizerKind::adagrad)
        .value("rmsprop", OptimizerKind::rmsprop)
        .value("adam", OptimizerKind::adam);
    py::enum_<ColorRange>(m, "ColorRange")
        .value("auto_detect", ColorRange::auto_detect)
        .value("unit", ColorRange::unit)
        .value("byte", ColorRange::byte);
    py::enum_<Split>(m, "Split")
        .value("train", Split::train)
        .value("val", Split::val)
        .value("test", Split::test);

    // Point clouds and I/O.
    py::class_<NormalizationTransform>(m, "NormalizationTransform")
        .def(py::init<>())
        .def_readwrite("centroid", &NormalizationTransform::centroid)
        .def_readwrite("scale", &NormalizationTransform::scale)
        .def_readwrite("color_range", &NormalizationTransform::color_range);

    py::class_<ColoredPointCloud>(m, "ColoredPointCloud")
        .def(py::init<Matrix, Matrix, std::optional<int>>(), py::arg("positions"),
             py::arg("colors"), py::arg("label") = std::nullopt)
        .def_static("from_normalized", &ColoredPointCloud::from_normalized, py::arg("positions"),
                    py::arg("colors"), py::arg("transform") = NormalizationTransform{},
                    py::arg("label") = std::nullopt)
        .def_property_readonly("positions", &ColoredPointCloud::positions)
        .def_property_readonly("colors", &ColoredPointCloud::colors)
        .def_property_readonly("normalized", &ColoredPointCloud::normalized)
        .def_property_readonly("transform", &ColoredPointCloud::transform)
        .def_property("label", &ColoredPointCloud::label, &ColoredPointCloud::set_label)
        .def("__len__", &ColoredPointCloud::size)
        .def(py::self == py::self)
        .def("__repr__", [](const ColoredPointCloud& c) {
            return "<ColoredPointCloud " + std::to_string(c.size()) + " points" +
                   (c.normalized() ? ", normalized>" : ">");
        });

    py::class_<NormalizeOptions>(m, "NormalizeOptions")
        .def(py::init<>())
        .def_readwrite("color_range", &NormalizeOptions::color_range)
        .def_readwrite("allow_degenerate", &NormalizeOptions::allow_degenerate);

    m.def(
        "normalize",
        [](const ColoredPointCloud& cloud, ColorRange range, bool allow_degenerate) {
            return normalize(cloud, {range, allow_degenerate});
        },
        py::arg("cloud"), py::arg("color_range") = ColorRange::auto_detect,
        py::arg("allow_degenerate") = false);
    m.def("denormalize", &denormalize);
    m.def("downsample", &downsample, py::arg("cloud"), py::arg("n"), py::arg("seed"));
    m.def(
        "permute",
        [](const ColoredPointCloud& cloud, const std::vector<Eigen::Index>& perm) {
            return permute(cloud, perm);
        },
        py::arg("cloud"), py::arg("perm"));
    m.def("load_ply", &load_ply);
    m.def("save_ply", &save_ply, py::arg("cloud"), py::arg("path"));

    py::class_<PixelSet>(m, "PixelSet")
        .def(py::init([](Matrix colors, Eigen::Index height, Eigen::Index width) {
                 return PixelSet{std::move(colors), height, width};
             }),
             py::arg("colors"), py::arg("height") = 0, py::arg("width") = 0)
        .def_readwrite("colors", &PixelSet::colors)
        .def_readwrite("height", &PixelSet::height)
        .def_readwrite("width", &PixelSet::width);
    m.def("image_to_pixel_set", &image_to_pixel_set);
    m.def("png_supported", &png_supported);

    // Datasets.
    py::class_<LabeledDataset>(m, "LabeledDataset")
        .def(py::init<>())
        .def_readwrite("clouds", &LabeledDataset::clouds)
        .def_readwrite("class_count", &LabeledDataset::class_count)
        .def_readwrite("split", &LabeledDataset::split)
        .def_readwrite("class_names", &LabeledDataset::class_names)
        .def("__len__", &LabeledDataset::size);

    py::class_<SyntheticConfig>(m, "SyntheticConfig")
        .def(py::init<>())
        .def_readwrite("class_count", &SyntheticConfig::class_count)
        .def_readwrite("instances_per_class", &SyntheticConfig::instances_per_class)
        .def_readwrite("points_per_cloud", &SyntheticConfig::points_per_cloud)
        .def_readwrite("seed", &SyntheticConfig::seed)
        .def_readwrite("jitter", &SyntheticConfig::jitter);
    m.def("generate_synthetic_dataset", &generate_synthetic_dataset);
    m.def("stratified_split", &stratified_split, py::arg("dataset"),
          py::arg("held_out_fraction"), py::arg("seed"), py::arg("held_out_tag") = Split::test);
    m.def("class_histogram", &class_histogram);

    // Network.
    py::class_<NetworkConfig>(m, "NetworkConfig")
        .def(py::init<>())
        .def_readwrite("layer_widths", &NetworkConfig::layer_widths)
        .def_readwrite("head_widths", &NetworkConfig::head_widths)
        .def_readwrite("class_count", &NetworkConfig::class_count)
        .def_readwrite("fusion", &NetworkConfig::fusion)
        .def_readwrite("layer_kind", &NetworkConfig::layer_kind)
        .def_readwrite("leaky_slope", &NetworkConfig::leaky_slope)
        .def_readwrite("dropout_keep", &NetworkConfig::dropout_keep)
        .def("__repr__", [](const NetworkConfig& c) { return describe(c); });

    py::class_<NetworkParams>(m, "NetworkParams")
        .def_readonly("config", &NetworkParams::config)
        .def_readwrite("class_names", &NetworkParams::class_names);
    m.def("init_params", &init_params, py::arg("config"), py::arg("seed"));
    m.def("save_params", &save_params, py::arg("params"), py::arg("path"));
    m.def(
        "load_params",
        [](const std::filesystem::path& path) { return load_params(path); }, py::arg("path"));
    m.def("classify", &classify, py::arg("cloud"), py::arg("params"),
          "Inference logits (1 x classes).");
    m.def(
        "class_probabilities",
        [](const ColoredPointCloud& cloud, const NetworkParams& params) {
            return softmax_rows(classify(cloud, params));
        },
        py::arg("cloud"), py::arg("params"));
    m.def("predict", &predict, py::arg("cloud"), py::arg("params"));
    m.def(
        "extract_representations",
        [](const Matrix& points, const NetworkParams& params, RouteKind route,
           const std::set<int>& content_layers, const std::set<int>& style_layers,
           GramNormalization normalization) {
            Representations r = extract_representations(points, params, route, content_layers,
                                                         style_layers, normalization);
            return py::make_tuple(r.content, r.style);
        },
        py::arg("points"), py::arg("params"), py::arg("route"), py::arg("content_layers"),
        py::arg("style_layers"), py::arg("normalization") = GramNormalization::per_point,
        "Returns (features by layer, Gram matrices by layer).");
    m.def("route_points", &route_points);

    // Training.
    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("beta1", &TrainConfig::beta1)
        .def_readwrite("beta2", &TrainConfig::beta2)
        .def_readwrite("dropout_keep", &TrainConfig::dropout_keep)
        .def_readwrite("leaky_slope", &TrainConfig::leaky_slope)
        .def_readwrite("rebalance_target", &TrainConfig::rebalance_target)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("layer_widths", &TrainConfig::layer_widths)
        .def_readwrite("head_widths", &TrainConfig::head_widths)
        .def_readwrite("fusion", &TrainConfig::fusion)
        .def_readwrite("layer_kind", &TrainConfig::layer_kind)
        .def_readwrite("validation_fraction", &TrainConfig::validation_fraction)
        .def_readwrite("patience", &TrainConfig::patience)
        .def_readwrite("lr_decay", &TrainConfig::lr_decay)
        .def("__repr__", [](const TrainConfig& c) { return describe(c); });

    py::class_<EpochRecord>(m, "EpochRecord")
        .def_readonly("epoch", &EpochRecord::epoch)
        .def_readonly("train_loss", &EpochRecord::train_loss)
        .def_readonly("train_acc", &EpochRecord::train_acc)
        .def_readonly("val_acc", &EpochRecord::val_acc);
    py::class_<TrainResult>(m, "TrainResult")
        .def_readonly("params", &TrainResult::params)
        .def_readonly("trace", &TrainResult::trace)
        .def_readonly("best_epoch", &TrainResult::best_epoch)
        .def_readonly("skipped_batches", &TrainResult::skipped_batches);
    m.def("train", &train, py::arg("dataset"), py::arg("config"),
          py::arg("validation") = std::nullopt, py::arg("on_epoch") = EpochCallback{},
          py::call_guard<py::gil_scoped_release>());

    py::class_<EvalReport>(m, "EvalReport")
        .def_readonly("accuracy", &EvalReport::accuracy)
        .def_readonly("multiclass_auc", &EvalReport::multiclass_auc)
        .def_readonly("class_counts", &EvalReport::class_counts)
        .def_readonly("confusion", &EvalReport::confusion);
    m.def("evaluate", &evaluate, py::arg("params"), py::arg("dataset"));

    // Transfer.
    py::class_<OptimizerSettings>(m, "OptimizerSettings")
        .def(py::init<>())
        .def_readwrite("kind", &OptimizerSettings::kind)
        .def_readwrite("learning_rate", &OptimizerSettings::learning_rate)
        .def_readwrite("momentum", &OptimizerSettings::momentum)
        .def_readwrite("rmsprop_decay", &OptimizerSettings::rmsprop_decay)
        .def_readwrite("beta1", &OptimizerSettings::beta1)
        .def_readwrite("beta2", &OptimizerSettings::beta2)
        .def_readwrite("epsilon", &OptimizerSettings::epsilon);

    py::class_<TransferConfig>(m, "TransferConfig")
        .def(py::init<>())
        .def_readwrite("alpha_geo", &TransferConfig::alpha_geo)
        .def_readwrite("beta_geo", &TransferConfig::beta_geo)
        .def_readwrite("alpha_color", &TransferConfig::alpha_color)
        .def_readwrite("beta_color", &TransferConfig::beta_color)
        .def_readwrite("alpha_fused", &TransferConfig::alpha_fused)
        .def_readwrite("beta_fused", &TransferConfig::beta_fused)
        .def_readwrite("content_layers", &TransferConfig::content_layers)
        .def_readwrite("style_layers", &TransferConfig::style_layers)
        .def_readwrite("update_mask", &TransferConfig::update_mask)
        .def_readwrite("fusion", &TransferConfig::fusion)
        .def_readwrite("init", &TransferConfig::init)
        .def_readwrite("gaussian_sigma", &TransferConfig::gaussian_sigma)
        .def_readwrite("target_points", &TransferConfig::target_points)
        .def_readwrite("optimizer", &TransferConfig::optimizer)
        .def_readwrite("steps", &TransferConfig::steps)
        .def_readwrite("gram_normalization", &TransferConfig::gram_normalization)
        .def_readwrite("trace_every", &TransferConfig::trace_every)
        .def_readwrite("seed", &TransferConfig::seed)
        .def("validate", [](const TransferConfig& c) { validate(c); })
        .def("__repr__", [](const TransferConfig& c) { return describe(c); });
    m.def("preset", &preset, py::arg("name"));
    m.def("preset_names", [] {
        std::vector<std::string> names;
        for (auto n : preset_names()) {
            names.emplace_back(n);
        }
        return names;
    });

    py::class_<LossBreakdown>(m, "LossBreakdown")
        .def_readonly("content_geo", &LossBreakdown::content_geo)
        .def_readonly("style_geo", &LossBreakdown::style_geo)
        .def_readonly("content_color", &LossBreakdown::content_color)
        .def_readonly("style_color", &LossBreakdown::style_color)
        .def_readonly("content_fused", &LossBreakdown::content_fused)
        .def_readonly("style_fused", &LossBreakdown::style_fused)
        .def_readonly("total", &LossBreakdown::total);
    py::class_<TraceRecord>(m, "TraceRecord")
        .def_readonly("step", &TraceRecord::step)
        .def_readonly("loss", &TraceRecord::loss);
    py::class_<TransferResult>(m, "TransferResult")
        .def_readonly("stylized", &TransferResult::stylized)
        .def_readonly("trace", &TransferResult::trace)
        .def_readonly("final_loss", &TransferResult::final_loss);

    m.def("total_objective", &total_objective, py::arg("target"), py::arg("content"),
          py::arg("style"), py::arg("params"), py::arg("config"));
    m.def("stylize", &stylize, py::arg("content"), py::arg("style"), py::arg("params"),
          py::arg("config"), py::arg("on_trace") = StepCallback{});

    m.attr("LAYER_COUNT") = kLayerCount;
}
