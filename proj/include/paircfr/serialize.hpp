#pragma once

#include <string>

#include "paircfr/eval.hpp"
#include "paircfr/trainer.hpp"

namespace paircfr {

std::string history_to_json(const TrainHistory& history);
std::string run_report_to_json(const RunReport& report);
RunReport run_report_from_json(const std::string& text);
std::string sweep_report_to_json(const SweepReport& report);

}  // namespace paircfr
