#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gandistill/analysis.hpp"
#include "gandistill/config.hpp"
#include "gandistill/errors.hpp"
#include "gandistill/losses.hpp"
#include "gandistill/metrics.hpp"
#include "gandistill/model_io.hpp"
#include "gandistill/sampling.hpp"
#include "gandistill/teacher.hpp"

namespace py = pybind11;
using namespace gandistill;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using F32 = py::array_t<float, py::array::c_style | py::array::forcecast>;

Eigen::MatrixXd to_matrix(const F64& a) {
  if (a.ndim() != 2) throw InvalidArgument("expected a 2-D array");
  Eigen::MatrixXd m(a.shape(0), a.shape(1));
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    for (py::ssize_t j = 0; j < a.shape(1); ++j) m(i, j) = a.at(i, j);
  return m;
}

Tensor<float> to_images(const F32& a) {
  if (a.ndim() != 4) throw InvalidArgument("expected an (N, C, H, W) array");
  Tensor<float> t(a.shape(0), a.shape(1), a.shape(2), a.shape(3));
  std::copy(a.data(), a.data() + a.size(), t.data());
  return t;
}

py::array_t<float> from_tensor(const Tensor<float>& t) {
  py::array_t<float> out({t.n(), t.c(), t.h(), t.w()});
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

GaussianStats stats_of(const F64& features) { return gaussian_stats(to_matrix(features)); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Black-box GAN distillation core";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("sample_truncated_normal",
        [](std::uint64_t seed, int z_dim, double truncation) {
          return sample_truncated_normal(seed, z_dim, truncation).values;
        },
        py::arg("seed"), py::arg("z_dim"), py::arg("truncation") = kDefaultTruncation);

  m.def("inception_score",
        [](const F64& probs, int splits) {
          const auto s = inception_score(to_matrix(probs), splits);
          return py::make_tuple(s.mean, s.std);
        },
        py::arg("probs"), py::arg("splits") = 10);

  m.def("frechet_distance",
        [](const F64& a, const F64& b) { return frechet_distance(stats_of(a), stats_of(b)); },
        py::arg("features_a"), py::arg("features_b"),
        "FID between Gaussian fits of two feature matrices (rows are samples).");

  m.def("pixel_kd_loss",
        [](const F32& teacher, const F32& student) {
          return pixel_kd_loss<float>(to_images(teacher), to_images(student)).value;
        });
  m.def("hinge_d_loss", [](std::vector<double> real, std::vector<double> fake) {
    return hinge_d_loss<double>(real, fake).value;
  });
  m.def("adv_kd_g_loss", [](std::vector<double> scores) { return adv_kd_g_loss<double>(scores).value; });
  m.def("decay_lambda1", [](std::int64_t step, double initial, std::int64_t horizon) {
    return decay_lambda1(step, Lambda1Schedule{initial, horizon});
  });

  m.def("high_frequency_energy", [](const F32& images) { return high_frequency_energy(to_images(images)); });
  m.def("fid_correlation", [](std::vector<double> a, std::vector<double> b) { return fid_correlation(a, b); });

  m.def("full_scale_param_count",
        [](int channel_multiplier, bool depthwise) {
          Generator<float> g(GeneratorSpec::full_scale(channel_multiplier, depthwise
                                                                                ? ConvKind::kDepthwiseSeparable
                                                                                : ConvKind::kStandard),
                             0);
          return count_params(g);
        },
        py::arg("channel_multiplier"), py::arg("depthwise"));

  m.def("render_synthetic_teacher",
        [](int num_classes, int resolution, std::uint64_t teacher_seed, std::vector<std::vector<float>> z,
           std::vector<int> labels) {
          auto t = make_synthetic_teacher(num_classes, resolution, teacher_seed);
          if (z.size() != labels.size()) throw InvalidArgument("z and labels differ in length");
          Tensor<float> out(static_cast<int>(z.size()), 3, resolution, resolution);
          for (std::size_t i = 0; i < z.size(); ++i) {
            const auto img = t->generate(LatentVector{.values = z[i]}, ClassLabel{.index = labels[i]});
            std::copy(img.data(), img.data() + img.size(), out.sample(static_cast<int>(i)));
          }
          return from_tensor(out);
        },
        py::arg("num_classes"), py::arg("resolution"), py::arg("teacher_seed"), py::arg("z"), py::arg("labels"));

  m.def("generate",
        [](const std::filesystem::path& model, std::vector<std::vector<float>> z, std::vector<int> labels) {
          auto g = load_generator(model);
          const int zd = g->spec().z_dim;
          Tensor<float> zt(static_cast<int>(z.size()), zd);
          for (std::size_t i = 0; i < z.size(); ++i) {
            if (static_cast<int>(z[i].size()) != zd) throw InvalidArgument("latent has the wrong length");
            std::copy(z[i].begin(), z[i].end(), zt.sample(static_cast<int>(i)));
          }
          return from_tensor(g->forward(zt, labels, Mode::kEval));
        },
        py::arg("model"), py::arg("z"), py::arg("labels"), "Eval-mode images from a saved generator.");

  m.def("resolve_config",
        [](const std::filesystem::path& file, std::vector<std::pair<std::string, std::string>> overrides) {
          return RunConfig::parse_and_validate(file, overrides).to_json().dump();
        },
        py::arg("file") = std::filesystem::path(), py::arg("overrides") = std::vector<std::pair<std::string, std::string>>{},
        "Resolved configuration as a JSON string.");

  m.def("run_cli",
        [](std::vector<std::string> args) {
          args.insert(args.begin(), "gandistill");
          std::vector<const char*> argv;
          for (const auto& a : args) argv.push_back(a.c_str());
          py::gil_scoped_release release;
          return run_cli(static_cast<int>(argv.size()), argv.data());
        },
        py::arg("args"), "Runs the command line in-process and returns its exit status.");
}
