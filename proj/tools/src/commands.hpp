#pragma once

#include "config.hpp"

namespace lemmse::cli {

void run_estimate(const ExperimentConfig &c);
void run_diagnose(const ExperimentConfig &c);
void run_oracle(const ExperimentConfig &c);
void run_compare(const ExperimentConfig &c);
void run_sweep(const ExperimentConfig &c);

} // namespace lemmse::cli
