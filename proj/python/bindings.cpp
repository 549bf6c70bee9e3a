/* Copyright 2026 The fopkit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <string>
#include <vector>

#include "fopkit/config.hpp"
#include "fopkit/data.hpp"
#include "fopkit/error.hpp"
#include "fopkit/fisher.hpp"
#include "fopkit/fop.hpp"
#include "fopkit/linalg.hpp"
#include "fopkit/nn.hpp"
#include "fopkit/schedule.hpp"
#include "fopkit/trainer.hpp"

namespace py = pybind11;
using namespace fopkit;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() == 1) {
    return Matrix(static_cast<std::size_t>(a.shape(0)), 1, std::vector<double>(a.data(), a.data() + a.size()));
  }
  if (a.ndim() != 2) throw Error(ErrorKind::kDimensionMismatch, "expected a 1-D or 2-D array");
  return Matrix(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

std::vector<int> to_labels(const IntArray& y) { return {y.data(), y.data() + y.size()}; }

py::tuple dataset_tuple(const Dataset& d) {
  IntArray y(static_cast<py::ssize_t>(d.labels.size()));
  std::copy(d.labels.begin(), d.labels.end(), y.mutable_data());
  return py::make_tuple(to_array(d.features), y);
}

py::list matrices(const std::vector<Matrix>& ms) {
  py::list out;
  for (const auto& m : ms) out.append(to_array(m));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Kronecker-factored Fisher blocks and the FOP update";

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      error((std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  py::class_<KroneckerFisherBlock>(m, "FisherBlock")
      .def(py::init<std::size_t, std::size_t, std::size_t, double>(), py::arg("layer_id"), py::arg("input_dim"),
           py::arg("output_dim"), py::arg("ema_decay") = 0.95)
      .def("set_factors", [](KroneckerFisherBlock& b, const Array& a, const Array& g) {
        b.set_factors(to_matrix(a), to_matrix(g));
      })
      .def("accumulate", [](KroneckerFisherBlock& b, const Array& inputs, const Array& grads) {
        b.accumulate(batch_statistics(to_matrix(inputs), to_matrix(grads)));
      })
      .def("refresh_inverse", [](KroneckerFisherBlock& b, double damping) { b.refresh_inverse(damping); },
           py::arg("damping"))
      .def_property_readonly("a", [](const KroneckerFisherBlock& b) { return to_array(b.a()); })
      .def_property_readonly("g", [](const KroneckerFisherBlock& b) { return to_array(b.g()); })
      .def_property_readonly("damping", &KroneckerFisherBlock::damping)
      .def("fisher_vec", [](const KroneckerFisherBlock& b, const Array& v) { return to_array(b.fisher_vec(to_matrix(v))); })
      .def("fisher_inv_vec",
           [](const KroneckerFisherBlock& b, const Array& v) { return to_array(b.fisher_inv_vec(to_matrix(v))); })
      .def("fisher_inner", [](const KroneckerFisherBlock& b, const Array& u, const Array& v) {
        return b.fisher_inner(to_matrix(u), to_matrix(v));
      });

  py::class_<GradientPair>(m, "GradientPair")
      .def(py::init([](const Array& g1, const Array& g2) { return make_gradient_pair(to_matrix(g1), to_matrix(g2)); }))
      .def_property_readonly("avg", [](const GradientPair& p) { return to_array(p.avg); })
      .def_property_readonly("diff", [](const GradientPair& p) { return to_array(p.diff); });

  m.def("projection_scalar",
        [](const GradientPair& p, const KroneckerFisherBlock& b, std::optional<double> eps) {
          return projection_scalar(p, b, eps ? *eps : default_projection_epsilon(p, b));
        },
        py::arg("pair"), py::arg("block"), py::arg("eps") = py::none());
  m.def("orthogonal_component",
        [](const GradientPair& p, double s) { return to_array(orthogonal_component(p, s)); });
  m.def("beta_star", [](const GradientPair& p, const Array& perp, const KroneckerFisherBlock& b) {
    return beta_star(p, to_matrix(perp), b);
  });
  m.def("combined_gradient", [](const GradientPair& p, const Array& perp, double beta) {
    return to_array(combined_gradient(p, to_matrix(perp), beta));
  });
  m.def("eta_star_raw", [](const GradientPair& p, const Array& comb, const KroneckerFisherBlock& b) {
    return eta_star_raw(p, to_matrix(comb), b);
  });
  m.def("eta_star", [](const GradientPair& p, const Array& comb, const KroneckerFisherBlock& b) {
    return eta_star(p, to_matrix(comb), b);
  });
  m.def("fop_layer_step",
        [](const GradientPair& p, const KroneckerFisherBlock& b, double eta0) {
          const FopStepPlan plan = fop_layer_step(p, b, eta0);
          py::dict d;
          d["s_proj"] = plan.s_proj;
          d["epsilon"] = plan.epsilon;
          d["g_perp"] = to_array(plan.g_perp);
          d["beta"] = plan.beta;
          d["g_combined"] = to_array(plan.g_combined);
          d["eta_star_raw"] = plan.eta_star_raw;
          d["eta_star"] = plan.eta_star;
          d["update"] = to_array(plan.update);
          d["perp_ratio"] = plan.perp_ratio;
          return d;
        },
        py::arg("pair"), py::arg("block"), py::arg("eta0"));
  m.def("kfac_layer_step", [](const Array& g, const KroneckerFisherBlock& b, double eta0) {
    return to_array(kfac_layer_step(to_matrix(g), b, eta0));
  });

  py::class_<Model>(m, "Model")
      .def_static("mlp",
                  [](std::vector<std::size_t> widths, const std::string& activation, std::uint64_t seed) {
                    return Model::mlp(widths, parse_activation(activation), seed);
                  },
                  py::arg("widths"), py::arg("activation") = "relu", py::arg("seed") = 0)
      .def_property_readonly("num_layers", &Model::num_layers)
      .def_property_readonly("parameter_count", &Model::parameter_count)
      .def("weights", [](const Model& md, std::size_t i) { return to_array(md.layers().at(i).weights); })
      .def("parameters", &Model::parameters)
      .def("set_parameters", [](Model& md, std::vector<double> theta) { md.set_parameters(theta); })
      .def("forward", [](const Model& md, const Array& x) { return to_array(forward(md, to_matrix(x))); })
      .def("evaluate",
           [](const Model& md, const Array& x, const IntArray& y) {
             const auto e = evaluate(md, to_matrix(x), to_labels(y));
             return py::make_tuple(e.loss, e.accuracy);
           })
      .def("loss_and_grads", [](const Model& md, const Array& x, const IntArray& y) {
        const BatchTape t = loss_and_backward(md, to_matrix(x), to_labels(y));
        return py::make_tuple(t.loss, matrices(t.grads));
      });

  m.def("gen_blobs",
        [](std::size_t classes, std::size_t per_class, std::size_t dim, double spread, std::uint64_t seed) {
          return dataset_tuple(gen_blobs(classes, per_class, dim, spread, seed));
        },
        py::arg("classes"), py::arg("per_class"), py::arg("dim"), py::arg("spread"), py::arg("seed"));
  m.def("gen_spirals",
        [](std::size_t classes, std::size_t per_class, double noise, std::uint64_t seed, double turns) {
          return dataset_tuple(gen_spirals(classes, per_class, noise, seed, turns));
        },
        py::arg("classes"), py::arg("per_class"), py::arg("noise"), py::arg("seed"), py::arg("turns") = kSpiralTurns);
  m.def("load_idx", [](const std::filesystem::path& images, const std::filesystem::path& labels) {
    return dataset_tuple(load_idx(images, labels));
  });

  m.def("cosine_lr",
        [](std::size_t epoch, double alpha0, std::size_t max_epoch, double floor, double factor) {
          SchedulerSpec spec;
          spec.kind = SchedulerKind::kCosine;
          spec.max_epoch = max_epoch;
          spec.cosine_floor = floor;
          spec.cosine_factor = factor;
          return cosine_lr(epoch, alpha0, spec);
        },
        py::arg("epoch"), py::arg("alpha0"), py::arg("max_epoch") = 100, py::arg("floor") = 0.001,
        py::arg("factor") = 0.47);

  m.def("train",
        [](const std::string& config_text, std::optional<std::uint64_t> seed) {
          RunConfig cfg = parse_config(config_text);
          if (seed) cfg.set_seed(*seed);
          const TrainData data = load_data(cfg);
          const TrainResult r = [&] {
            py::gil_scoped_release release;
            return train(cfg, data);
          }();
          py::list epochs;
          for (const auto& e : r.epochs) {
            py::dict d;
            d["epoch"] = e.epoch;
            d["mean_loss"] = e.mean_loss;
            d["train_accuracy"] = e.train_accuracy;
            d["lr"] = e.lr;
            epochs.append(d);
          }
          return py::make_tuple(r.model, epochs);
        },
        py::arg("config_text"), py::arg("seed") = py::none(),
        "Train from config text; returns (model, per-epoch summaries).");
}
