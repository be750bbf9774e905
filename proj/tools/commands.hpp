#pragma once

#include "run_config.hpp"

namespace tica::cli {

void cmd_simulate(const RunConfig& cfg);
void cmd_build_template(const RunConfig& cfg);
void cmd_fit(const RunConfig& cfg);
void cmd_evaluate(const RunConfig& cfg);

}  // namespace tica::cli
