#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tica {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Base class for all toolkit errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File missing or unreadable/unwritable.
struct IoError : Error { using Error::Error; };
// File exists but its header or payload is malformed.
struct FormatError : Error { using Error::Error; };
// Input is structurally valid but unusable (all-zero data, too few rows, ...).
struct DegenerateInput : Error { using Error::Error; };
// Shapes of related inputs do not agree.
struct DimensionMismatch : Error { using Error::Error; };
// A matrix that must be inverted is singular beyond tolerance.
struct RankDeficient : Error { using Error::Error; };
// A factorization or iteration failed beyond recovery.
struct NumericalError : Error { using Error::Error; };
// Cohort subjects disagree on dimensions or session structure.
struct InconsistentCohort : Error { using Error::Error; };
// Latent configuration count exceeds the enumeration cap.
struct SpaceTooLarge : Error { using Error::Error; };
// Source perturbation left the grid after the retry budget.
struct PerturbationOutOfGrid : Error { using Error::Error; };
// Run configuration is invalid (unknown field value, missing key, ...).
struct ConfigError : Error { using Error::Error; };
// A required input artifact is absent from the run directory.
struct MissingArtifact : Error { using Error::Error; };

// Log levels, selected via the TICA_LOG environment variable
// (error|warn|info|debug). Default: warn.
enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

LogLevel log_level();
void log(LogLevel level, const std::string& msg);

inline void log_error(const std::string& m) { log(LogLevel::error, m); }
inline void log_warn(const std::string& m) { log(LogLevel::warn, m); }
inline void log_info(const std::string& m) { log(LogLevel::info, m); }
inline void log_debug(const std::string& m) { log(LogLevel::debug, m); }

}  // namespace tica
