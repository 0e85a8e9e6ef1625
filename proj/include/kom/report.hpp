#pragma once

#include "kom/classifier.hpp"
#include "kom/kernelsim.hpp"
#include "kom/planner.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace kom::report {

using json = nlohmann::json;

// report.csv: one row per syscall, name-ascending; Cmax/Cmin are N/A when
// M1 = 0 and the performance metrics are N/A for abnormal runs.
std::string to_csv(const std::vector<classifier::SyscallProfile>& profiles,
                   bool zero_time);

json to_json(const std::vector<classifier::SyscallProfile>& profiles, bool zero_time);

// Rebuilds planner inputs from a report.json document.
std::vector<planner::SyscallModel> syscall_models_from_json(const json& report,
                                                            std::string* error);

json chain_to_json(const kernelsim::AttackChain& chain);
kernelsim::AttackChain chain_from_json(const json& j, std::string* error);

std::vector<kernelsim::Placement> placements_from_json(const json& j, std::string* error);

json result_to_json(const kernelsim::SimResult& result);

planner::AttackProblem attack_problem_from_json(const json& j, std::string* error);

// Accepts numbers or "0x..." strings.
bool parse_word(const json& v, uint32_t* out);

} // namespace kom::report
