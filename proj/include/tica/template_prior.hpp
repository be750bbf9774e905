#pragma once

#include <string>
#include <vector>

#include "tica/common.hpp"
#include "tica/preprocess.hpp"

namespace tica {

// Population prior for the template source maps: per-component,
// per-location mean and variance decomposition estimated from a two-session
// cohort. All map matrices are L x V.
struct Template {
  int l = 0;
  long v = 0;
  int n_subjects = 0;
  Matrix mean;
  Matrix var_between;  // noise-corrected, truncated at zero
  Matrix var_total;
  Matrix var_noise;

  // Strictly positive per-component floor applied to var_between wherever a
  // model inverts it. Preference order: 1e-6 * row median of var_total, row
  // mean fallback for maps whose median is zero, then global scale, then an
  // absolute guard.
  Vector var_floor() const;

  // var_between with the floor applied.
  Matrix var_between_floored() const;
};

// One session's source-map estimate for one subject.
struct SubjectEstimate {
  int subject = 0;
  int session = 0;  // 1 or 2
  Matrix sources;   // L x V
};

// Moment-matching variance decomposition across a cohort of paired session
// estimates. Every subject must contribute exactly sessions 1 and 2 with
// identical dimensions; n >= 2 subjects.
Template accumulate_estimates(const std::vector<SubjectEstimate>& estimates);

enum class Split {
  halve,              // one run per subject, divided into two pseudo-sessions
  provided_sessions,  // two runs per subject, preprocessed independently
};

// Full estimation pipeline: preprocess each subject, obtain two session
// estimates by dual regression against the group maps, and accumulate.
// With Split::halve each subject supplies one matrix (centered and scaled
// once, then divided); with Split::provided_sessions, exactly two.
Template build_template(const std::vector<std::vector<Matrix>>& subjects,
                        const Matrix& s_grp, Split split = Split::halve,
                        Scaling scaling = Scaling::temporal_sd,
                        int threads = 0);

// Directory layout: meta.json plus mean.bin, var_between.bin,
// var_total.bin, var_noise.bin.
void save_template(const std::string& dir, const Template& t);
Template load_template(const std::string& dir);

}  // namespace tica
