#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tica/dim_reduction.hpp"
#include "tica/dual_regression.hpp"
#include "tica/em.hpp"
#include "tica/infomax.hpp"
#include "tica/metrics.hpp"
#include "tica/preprocess.hpp"
#include "tica/rng.hpp"
#include "tica/simulate.hpp"
#include "tica/template_prior.hpp"

namespace py = pybind11;
using namespace tica;

PYBIND11_MODULE(_tica_core, m) {
  m.doc() = "Source separation with empirical population priors";

  // Errors surface as Python exceptions; ValueError covers user input,
  // RuntimeError numerical trouble.
  py::register_exception<DegenerateInput>(m, "DegenerateInput",
                                          PyExc_ValueError);
  py::register_exception<DimensionMismatch>(m, "DimensionMismatch",
                                            PyExc_ValueError);
  py::register_exception<InconsistentCohort>(m, "InconsistentCohort",
                                             PyExc_ValueError);
  py::register_exception<SpaceTooLarge>(m, "SpaceTooLarge", PyExc_ValueError);
  py::register_exception<PerturbationOutOfGrid>(m, "PerturbationOutOfGrid",
                                                PyExc_ValueError);
  py::register_exception<RankDeficient>(m, "RankDeficient", PyExc_RuntimeError);
  py::register_exception<NumericalError>(m, "NumericalError",
                                         PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  py::enum_<Scaling>(m, "Scaling")
      .value("temporal_sd", Scaling::temporal_sd)
      .value("image_sd", Scaling::image_sd);
  py::enum_<SpaceKind>(m, "SpaceKind")
      .value("full", SpaceKind::full)
      .value("subspace", SpaceKind::subspace);
  py::enum_<Role>(m, "Role")
      .value("template_ic", Role::template_ic)
      .value("nuisance_ic", Role::nuisance_ic);
  py::enum_<Split>(m, "Split")
      .value("halve", Split::halve)
      .value("provided_sessions", Split::provided_sessions);

  py::class_<ScaledData>(m, "ScaledData")
      .def_readonly("data", &ScaledData::data)
      .def_readonly("scale_factor", &ScaledData::scale_factor);
  m.def("center_scale", &center_scale, py::arg("x"),
        py::arg("scaling") = Scaling::temporal_sd);
  m.def("split_sessions", &split_sessions, py::arg("x"));

  py::class_<EigenSpectrum>(m, "EigenSpectrum")
      .def_readonly("eigenvalues", &EigenSpectrum::eigenvalues)
      .def_readonly("eigenvectors", &EigenSpectrum::eigenvectors);
  m.def("eigen_spectrum", &eigen_spectrum, py::arg("x"));

  py::class_<OrderEstimate>(m, "OrderEstimate")
      .def_readonly("order", &OrderEstimate::order)
      .def_readonly("low_rank_warning", &OrderEstimate::low_rank_warning)
      .def_readonly("log_evidence", &OrderEstimate::log_evidence);
  m.def("estimate_order", &estimate_order, py::arg("eigenvalues"),
        py::arg("n_obs"));
  m.def("residual_variance", &residual_variance, py::arg("eigenvalues"),
        py::arg("q"));

  py::class_<ReducedData>(m, "ReducedData")
      .def_readonly("y", &ReducedData::y)
      .def_readonly("h", &ReducedData::h)
      .def_readonly("c_diag", &ReducedData::c_diag)
      .def_readonly("sigma2", &ReducedData::sigma2)
      .def_readonly("order", &ReducedData::order)
      .def_readonly("low_rank_warning", &ReducedData::low_rank_warning);
  m.def("prewhiten", &prewhiten, py::arg("data"), py::arg("q") = 0);

  py::class_<DualRegResult>(m, "DualRegResult")
      .def_readonly("mixing", &DualRegResult::mixing)
      .def_readonly("sources", &DualRegResult::sources);
  m.def("dual_regress", &dual_regress, py::arg("x"), py::arg("s_grp"));

  py::class_<Grid>(m, "Grid")
      .def(py::init<>())
      .def_readwrite("height", &Grid::height)
      .def_readwrite("width", &Grid::width)
      .def("size", &Grid::size);
  py::class_<Center>(m, "Center")
      .def(py::init<>())
      .def(py::init([](double row, double col) {
             return Center{row, col};
           }),
           py::arg("row"), py::arg("col"))
      .def_readwrite("row", &Center::row)
      .def_readwrite("col", &Center::col);
  py::class_<SourceSpec>(m, "SourceSpec")
      .def(py::init<>())
      .def_readwrite("grid", &SourceSpec::grid)
      .def_readwrite("centers", &SourceSpec::centers)
      .def_readwrite("amplitudes", &SourceSpec::amplitudes)
      .def_readwrite("fwhm", &SourceSpec::fwhm)
      .def_readwrite("roles", &SourceSpec::roles)
      .def("n_sources", &SourceSpec::n_sources)
      .def("n_template", &SourceSpec::n_template)
      .def("n_nuisance", &SourceSpec::n_nuisance)
      .def("validate", &SourceSpec::validate);
  m.def("gaussian_source", &gaussian_source, py::arg("grid"),
        py::arg("center"), py::arg("amplitude"), py::arg("fwhm"));
  m.def("source_maps", &source_maps, py::arg("spec"));
  m.def("sima_spec", &sima_spec);
  m.def("order_study_spec", &order_study_spec);
  m.def("simc_spec", &simc_spec);

  py::class_<Template>(m, "Template")
      .def(py::init<>())
      .def_readwrite("l", &Template::l)
      .def_readwrite("v", &Template::v)
      .def_readwrite("n_subjects", &Template::n_subjects)
      .def_readwrite("mean", &Template::mean)
      .def_readwrite("var_between", &Template::var_between)
      .def_readwrite("var_total", &Template::var_total)
      .def_readwrite("var_noise", &Template::var_noise)
      .def("var_floor", &Template::var_floor)
      .def("var_between_floored", &Template::var_between_floored);
  m.def("population_prior", &population_prior, py::arg("spec"),
        py::arg("var_scale") = 0.5);
  m.def("population_template", &population_template, py::arg("spec"),
        py::arg("var_scale") = 0.5);
  m.def("save_template", &save_template, py::arg("dir"), py::arg("t"));
  m.def("load_template", &load_template, py::arg("dir"));

  py::class_<PerturbSd>(m, "PerturbSd")
      .def(py::init<>())
      .def_readwrite("amplitude", &PerturbSd::amplitude)
      .def_readwrite("fwhm", &PerturbSd::fwhm)
      .def_readwrite("loc", &PerturbSd::loc);
  m.def("sample_subject_a", &sample_subject_a, py::arg("tpl"),
        py::arg("seed"));
  m.def("sample_subject_b",
        py::overload_cast<const SourceSpec&, const PerturbSd&, std::uint64_t>(
            &sample_subject_b),
        py::arg("base"), py::arg("sd"), py::arg("seed"));
  m.def("sample_subject_b",
        py::overload_cast<const SourceSpec&, std::uint64_t>(&sample_subject_b),
        py::arg("base"), py::arg("seed"));
  m.def("simb_template", &simb_template, py::arg("base"), py::arg("n_draws"),
        py::arg("seed"));
  m.def("gen_timecourses", &gen_timecourses, py::arg("t"), py::arg("q"),
        py::arg("seed"));

  py::class_<SubjectData>(m, "SubjectData")
      .def_readonly("sources", &SubjectData::sources)
      .def_readonly("timecourses", &SubjectData::timecourses)
      .def_readonly("observed", &SubjectData::observed)
      .def_readonly("snr", &SubjectData::snr);
  m.def("gen_observed", &gen_observed, py::arg("sources"),
        py::arg("timecourses"), py::arg("snr"), py::arg("seed"));
  m.def("signal_sd", &signal_sd, py::arg("sources"));

  py::class_<SubjectEstimate>(m, "SubjectEstimate")
      .def(py::init<>())
      .def_readwrite("subject", &SubjectEstimate::subject)
      .def_readwrite("session", &SubjectEstimate::session)
      .def_readwrite("sources", &SubjectEstimate::sources);
  m.def("accumulate_estimates", &accumulate_estimates, py::arg("estimates"));
  m.def("build_template", &build_template, py::arg("subjects"),
        py::arg("s_grp"), py::arg("split") = Split::halve,
        py::arg("scaling") = Scaling::temporal_sd, py::arg("threads") = 0);

  py::class_<LatentSpace>(m, "LatentSpace")
      .def_readonly("q_prime", &LatentSpace::q_prime)
      .def_readonly("m", &LatentSpace::m)
      .def_readonly("kind", &LatentSpace::kind)
      .def_property_readonly("n_configs", [](const LatentSpace& s) {
        return s.configs.size();
      });
  m.def("enumerate_space", &enumerate_space, py::arg("q_prime"), py::arg("m"),
        py::arg("kind"), py::arg("cap") = std::size_t{10'000'000});

  py::class_<ThetaState>(m, "ThetaState")
      .def_readonly("a1", &ThetaState::a1)
      .def_readonly("a2", &ThetaState::a2)
      .def_readonly("nu0_sq", &ThetaState::nu0_sq);

  py::class_<FitOptions>(m, "FitOptions")
      .def(py::init<>())
      .def_readwrite("max_iters", &FitOptions::max_iters)
      .def_readwrite("tol_map", &FitOptions::tol_map)
      .def_readwrite("tol_nu", &FitOptions::tol_nu)
      .def_readwrite("orthogonalize", &FitOptions::orthogonalize)
      .def_readwrite("m", &FitOptions::m)
      .def_readwrite("n_restarts", &FitOptions::n_restarts)
      .def_readwrite("reestimate_nuisance", &FitOptions::reestimate_nuisance)
      .def_readwrite("q_prime", &FitOptions::q_prime)
      .def_readwrite("scaling", &FitOptions::scaling)
      .def_readwrite("seed", &FitOptions::seed)
      .def_readwrite("threads", &FitOptions::threads)
      .def_readwrite("space_cap", &FitOptions::space_cap);

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("template_mean", &FitResult::template_mean)
      .def_readonly("template_var", &FitResult::template_var)
      .def_readonly("nuisance_mean", &FitResult::nuisance_mean)
      .def_readonly("theta", &FitResult::theta)
      .def_readonly("order", &FitResult::order)
      .def_readonly("l", &FitResult::l)
      .def_readonly("q_prime", &FitResult::q_prime)
      .def_readonly("n_iters", &FitResult::n_iters)
      .def_readonly("converged", &FitResult::converged)
      .def_readonly("loglik_trace", &FitResult::loglik_trace)
      .def_readonly("n_configs", &FitResult::n_configs)
      .def_readonly("low_order", &FitResult::low_order)
      .def_readonly("low_rank_warning", &FitResult::low_rank_warning);
  m.def("fit_exact", &fit_exact, py::arg("y"), py::arg("tpl"),
        py::arg("q_prime"), py::arg("opts") = FitOptions{});
  m.def("fit_subspace", &fit_subspace, py::arg("y"), py::arg("tpl"),
        py::arg("q_prime"), py::arg("opts") = FitOptions{});
  m.def("fit_fast", &fit_fast, py::arg("x"), py::arg("tpl"),
        py::arg("opts") = FitOptions{});
  m.def("save_fit", &save_fit, py::arg("dir"), py::arg("fit"));
  m.def("load_fit", &load_fit, py::arg("dir"));

  py::class_<IcaResult>(m, "IcaResult")
      .def_readonly("mixing", &IcaResult::mixing)
      .def_readonly("sources", &IcaResult::sources)
      .def_readonly("cluster_quality", &IcaResult::cluster_quality)
      .def_readonly("converged", &IcaResult::converged)
      .def_readonly("n_epochs", &IcaResult::n_epochs);
  m.def("infomax_single", &infomax_single, py::arg("y"), py::arg("q_out"),
        py::arg("seed"));
  m.def("infomax_restarts", &infomax_restarts, py::arg("y"), py::arg("q_out"),
        py::arg("n_runs"), py::arg("seed"));

  m.def("pearson", &pearson, py::arg("a"), py::arg("b"));
  m.def("activation_mask", &activation_mask, py::arg("truth"));
  m.def("corr_activated", &corr_activated, py::arg("estimate"),
        py::arg("truth"), py::arg("mask"));
  m.def("mse_map", &mse_map, py::arg("estimates"), py::arg("truth"));
  m.def("match_components", &match_components, py::arg("estimates"),
        py::arg("truth"));

  py::class_<ReliabilityReport>(m, "ReliabilityReport")
      .def_readonly("icc", &ReliabilityReport::icc)
      .def_readonly("wi2c2", &ReliabilityReport::wi2c2)
      .def_readonly("var_between", &ReliabilityReport::var_between)
      .def_readonly("var_within", &ReliabilityReport::var_within)
      .def_readonly("var_total", &ReliabilityReport::var_total);
  m.def("icc_map", &icc_map, py::arg("session1"), py::arg("session2"));
  m.def("wi2c2", &wi2c2, py::arg("report"), py::arg("template_mean"));

  m.def("derive_seed", &derive_seed, py::arg("seed"), py::arg("a"),
        py::arg("b"));
}
