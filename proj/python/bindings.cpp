#include "qexodus/runner.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace qexodus;

namespace {

std::size_t state_index(const KilledChain& c, const py::object& x) {
    if (py::isinstance<py::str>(x)) return c.states().index(x.cast<std::string>());
    const auto i = x.cast<std::size_t>();
    if (i >= c.size()) throw py::index_error("state index out of range");
    return i;
}

Measure measure_from(const KilledChain& c, const Vector& w) {
    if (static_cast<std::size_t>(w.size()) != c.size()) fail(ErrorKind::Shape, "measure has the wrong length");
    return Measure{w, true};
}

std::string dump(const Json& j) { return j.dump(); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Markov chains and diffusions conditioned to avoid a moving boundary";
    m.attr("__version__") = std::string(kVersion);

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

    py::class_<KilledChain>(m, "Chain")
        .def_static("from_json", [](const std::string& text) { return chain_from_json(Json::parse(text)); })
        .def("to_json", [](const KilledChain& c) { return dump(to_json(c)); })
        .def_property_readonly("labels", [](const KilledChain& c) { return c.states().labels(); })
        .def_property_readonly("kernel", [](const KilledChain& c) { return c.chain().kernel.matrix(); })
        .def_property_readonly("schedule_kind", [](const KilledChain& c) { return std::string(to_string(c.schedule().kind())); })
        .def("__len__", &KilledChain::size)
        .def("step_matrix", [](const KilledChain& c, Time u) { return c.step_matrix(u); }, py::arg("u"))
        .def("survival", [](const KilledChain& c, const py::object& x, Time s, Time t) { return c.survival(state_index(c, x), s, t); },
             py::arg("x"), py::arg("s"), py::arg("t"))
        .def("conditioned_law",
             [](const KilledChain& c, const Vector& mu, Time s, Time t) { return c.conditioned_law(measure_from(c, mu), s, t).weights; },
             py::arg("mu"), py::arg("s"), py::arg("t"))
        .def("bridge_marginal",
             [](const KilledChain& c, const Vector& mu, Time s, Time k, Time t) {
                 return c.bridge_marginal(measure_from(c, mu), s, k, t).weights;
             },
             py::arg("mu"), py::arg("s"), py::arg("k"), py::arg("t"));

    m.def("certify", [](const KilledChain& c, Time t0_max, Time horizon) { return dump(to_json(certify(c, t0_max, horizon))); },
          py::arg("chain"), py::arg("t0_max") = 3, py::arg("horizon") = 400);
    m.def("qsd_fixed",
          [](const KilledChain& c) {
              const auto& s = c.schedule();
              return dump(to_json(qsd_fixed(c.chain(), s.kind() == ScheduleKind::Converging ? s.limit() : s.absorbing(0))));
          },
          py::arg("chain"));
    m.def("quasi_limiting",
          [](const KilledChain& c, const Vector& mu, Time t_max, double tol) {
              return dump(to_json(quasi_limiting(c, measure_from(c, mu), t_max, tol)));
          },
          py::arg("chain"), py::arg("mu"), py::arg("t_max") = 200, py::arg("tol") = 1e-9);
    m.def("quasi_ergodic", [](const KilledChain& c, const Vector& mu, Time n) { return quasi_ergodic(c, measure_from(c, mu), n).weights; },
          py::arg("chain"), py::arg("mu"), py::arg("n"));
    m.def("beta_infinity", [](const KilledChain& c) { return beta_infinity(c).weights; }, py::arg("chain"));

    m.def("brownian_survival",
          [](double x, double t, double level, double slope) {
              return brownian_survival(slope == 0.0 ? PassageKind::ConstantLevel : PassageKind::LinearBoundary, x, t, level, slope);
          },
          py::arg("x"), py::arg("t"), py::arg("level") = 0.0, py::arg("slope") = 0.0);
    m.def("brownian_passage_density",
          [](double x, double t, double level, double slope) {
              return brownian_passage_density(slope == 0.0 ? PassageKind::ConstantLevel : PassageKind::LinearBoundary, x, t,
                                               level, slope);
          },
          py::arg("x"), py::arg("t"), py::arg("level") = 0.0, py::arg("slope") = 0.0);
    m.def("scale_function_linear", [](double k, double z, double x) { return scale_function(Drift::linear(k), z, x); },
          py::arg("k"), py::arg("z"), py::arg("x"));
    m.def("simulate_survival",
          [](double x0, std::size_t n, double dt, double horizon, std::uint64_t seed, double level, bool bridge, unsigned threads) {
              DiffusionModel model;
              model.boundary = Boundary::constant(level);
              model.dt = dt;
              model.horizon = horizon;
              model.seed = seed;
              model.bridge = bridge;
              py::gil_scoped_release release;
              return simulate_paths(model, x0, n, {0, threads, nullptr}).survival_fraction();
          },
          py::arg("x0"), py::arg("n"), py::arg("dt") = 1e-3, py::arg("horizon") = 1.0, py::arg("seed") = 0,
          py::arg("level") = 0.0, py::arg("bridge") = true, py::arg("threads") = 1);

    m.def("validate_config",
          [](const std::string& text, const std::string& base_dir) { return parse_config(text, base_dir).errors; },
          py::arg("text"), py::arg("base_dir") = ".");
    m.def("run_config",
          [](const std::string& text, const std::string& base_dir, unsigned threads) {
              const auto loaded = parse_config(text, base_dir);
              if (!loaded.ok()) {
                  std::string all;
                  for (const auto& e : loaded.errors) all += (all.empty() ? "" : "\n") + e;
                  fail(ErrorKind::Schema, all);
              }
              RunOptions opts;
              opts.threads = threads;
              return run(*loaded.config, opts).dump();
          },
          py::arg("text"), py::arg("base_dir") = ".", py::arg("threads") = 1);
}
