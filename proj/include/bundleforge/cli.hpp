#pragma once

#include <string>

#include "bundleforge/checkpoint.hpp"
#include "bundleforge/config.hpp"
#include "bundleforge/diet.hpp"

namespace bundleforge::cli {

// One function per subcommand; each prints a single summary line on success
// and returns the process exit code.
int cmd_synth(const ExperimentConfig& cfg);
int cmd_feedback(const ExperimentConfig& cfg);
int cmd_train_teacher(const ExperimentConfig& cfg);
int cmd_train(const ExperimentConfig& cfg);
int cmd_eval(const ExperimentConfig& cfg);
int cmd_sweep(const ExperimentConfig& cfg);
int cmd_ablate(const ExperimentConfig& cfg);
int cmd_report(const ExperimentConfig& cfg);

// Model reconstruction from checkpoints (shapes validated against n).
diet::TeacherState<float> teacher_from_checkpoint(const checkpoint::NamedTensors& t,
                                                  int n_items, int layers_bundle);
diet::StudentState<float> student_from_checkpoint(const checkpoint::NamedTensors& t,
                                                  int n_items, int layers_item,
                                                  int layers_bundle);

int eval_threads();

}  // namespace bundleforge::cli
