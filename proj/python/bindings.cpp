// Python bindings for the main operations. States cross the boundary as numpy arrays of
// shape (n, state_dim); the C++ side stores states as columns.
#include "mvrlab/orchestrator.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace mvrlab;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

StateSequence to_sequence(const RowMatrix& rows) {
    std::vector<StateVec> s;
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
        s.push_back(rows.row(i).transpose());
    return StateSequence(std::move(s));
}

py::dict metrics_dict(const MetricsRow& r) {
    py::dict d;
    d["step"] = r.step;
    d["episode"] = r.episode;
    d["eval_return_mean"] = r.eval_return_mean;
    d["eval_return_std"] = r.eval_return_std;
    d["success_rate"] = r.success_rate;
    d["r_vlm_mean"] = r.r_vlm_mean;
    d["r_vlm_std"] = r.r_vlm_std;
    d["jensen_lhs"] = r.jensen_lhs;
    d["jensen_rhs"] = r.jensen_rhs;
    d["decay_ratio"] = r.decay_ratio;
    d["view_id_last_rendered"] = r.view_id_last_rendered;
    return d;
}

}  // namespace

PYBIND11_MODULE(_mvrlab, m) {
    m.doc() = "Multi-view relevance reward shaping: core operations";

    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<NumericFailure>(m, "NumericFailure", PyExc_ArithmeticError);

    // environments
    m.def("env_reset", [](const std::string& name, std::uint64_t seed) {
        EnvSpec s = make_env_spec(name);
        s.rng_seed = seed;
        return Eigen::VectorXd(env_reset(s));
    }, py::arg("env"), py::arg("seed") = 0);
    m.def("env_step", [](const std::string& name, const Eigen::VectorXd& state, const Eigen::VectorXd& action) {
        const Transition t = env_step(make_env_spec(name), state, action);
        return py::make_tuple(Eigen::VectorXd(t.next_state), t.task_reward);
    }, py::arg("env"), py::arg("state"), py::arg("action"), "Returns (next_state, task_reward).");
    m.def("env_success", [](const std::string& name, const RowMatrix& states) {
        return env_success(make_env_spec(name), to_sequence(states));
    }, py::arg("env"), py::arg("states"));

    // relevance model
    py::class_<RelevanceModel>(m, "RelevanceModel")
        .def_static("init", &RelevanceModel::init, py::arg("state_dim"), py::arg("hidden"), py::arg("seed"))
        .def_property_readonly("state_dim", &RelevanceModel::state_dim)
        .def_property_readonly("hidden", &RelevanceModel::hidden)
        .def("num_params", &RelevanceModel::num_params)
        .def("flat", &RelevanceModel::flat)
        .def("set_flat", [](RelevanceModel& self, const std::vector<double>& v) { self.set_flat(v); })
        .def("f", [](const RelevanceModel& self, const Eigen::VectorXd& s) { return f_mvr(self, s); }, py::arg("state"))
        .def("f_batch", [](const RelevanceModel& self, const RowMatrix& states) {
            return Eigen::VectorXd(f_mvr_batch(self, states.transpose()));
        }, py::arg("states"))
        .def("encode_seq_mean", [](const RelevanceModel& self, const RowMatrix& states) {
            return Eigen::VectorXd(encode_seq_mean(self, to_sequence(states)));
        }, py::arg("states"))
        .def("h_state", [](const RelevanceModel& self, const RowMatrix& a, const RowMatrix& b) {
            return h_state(self, to_sequence(a), to_sequence(b));
        }, py::arg("seq_i"), py::arg("seq_j"));

    m.def("sigmoid", &sigmoid);
    m.def("log_sigmoid", &log_sigmoid);
    m.def("h_vid", &h_vid, py::arg("s_i"), py::arg("s_j"), py::arg("beta") = 1.0);
    m.def("binary_cross_entropy", &binary_cross_entropy, py::arg("target"), py::arg("predicted"));

    // shaping
    m.def("r_mvr", &r_mvr, py::arg("task_reward"), py::arg("vlm_reward"), py::arg("w"));
    m.def("jensen_gap", [](const std::vector<double>& learner, const std::vector<double>& reference) {
        const JensenGap g = jensen_gap(learner, reference);
        return py::make_tuple(g.lhs, g.rhs);
    }, py::arg("learner_f"), py::arg("reference_f"), "Returns (lhs, rhs).");
    m.def("decay_metric", [](const std::vector<double>& history, std::size_t window) {
        const DecayReport r = decay_metric(history, window);
        py::dict d;
        d["std_ratio"] = r.std_ratio;
        d["mean_magnitude_ratio"] = r.mean_magnitude_ratio;
        d["first_std"] = r.first_std;
        d["final_std"] = r.final_std;
        d["degenerate"] = r.degenerate;
        return d;
    }, py::arg("history"), py::arg("window"));
    m.def("pearson", [](const std::vector<double>& x, const std::vector<double>& y) { return pearson(x, y); });

    // runs
    m.def("resolve_config", [](const std::string& ini, const std::map<std::string, std::string>& overrides) {
        std::vector<std::pair<std::string, std::string>> kv(overrides.begin(), overrides.end());
        return to_ini(parse_config(ini, kv));
    }, py::arg("ini") = "", py::arg("overrides") = std::map<std::string, std::string>{},
       "Parses INI text plus overrides and returns the fully resolved config.");
    m.def("train", [](const std::string& ini, const std::map<std::string, std::string>& overrides,
                      const std::string& out_dir) {
        std::vector<std::pair<std::string, std::string>> kv(overrides.begin(), overrides.end());
        const RunConfig cfg = parse_config(ini, kv);
        RunResult r;
        {
            py::gil_scoped_release release;
            r = run_training(cfg, out_dir);
        }
        py::dict d;
        py::list rows;
        for (const auto& row : r.rows)
            rows.append(metrics_dict(row));
        d["rows"] = rows;
        d["final_return"] = r.final_eval.mean_return;
        d["success_rate"] = r.final_eval.success_rate;
        d["phase_rate"] = r.final_eval.mean_phase_rate;
        d["episodes"] = r.episodes;
        d["clips_scored"] = r.clips_scored;
        d["r_vlm_history"] = r.checkpoint.r_vlm_history;
        return d;
    }, py::arg("ini") = "", py::arg("overrides") = std::map<std::string, std::string>{}, py::arg("out_dir") = "");
    m.def("metrics_header", &metrics_header);
}
