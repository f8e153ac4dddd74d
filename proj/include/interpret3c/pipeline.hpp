#pragma once

#include "interpret3c/common.hpp"
#include "interpret3c/config.hpp"

#include <string>

namespace i3c::pipeline {

// Stage failure carrying the stage name for the CLI's machine-parseable error
// line (`error stage=<stage> cause=<message>`).
struct StageFailure : Error {
    std::string stage;
    StageFailure(std::string stage_name, const std::string& cause)
        : Error(cause), stage(std::move(stage_name)) {}
};

// Stage artifacts land in config.output_dir; each stage writes a stamp with
// the config hash and seeds, and later stages refuse stale inputs.
void simulate(const config::PipelineConfig& config);
void extract(const config::PipelineConfig& config);
void train(const config::PipelineConfig& config);
void cluster(const config::PipelineConfig& config);
void report(const config::PipelineConfig& config);
void run_pipeline(const config::PipelineConfig& config); // extract -> train -> cluster -> report

// name in {simulate, extract, train, cluster, report, pipeline}; wraps any
// error into StageFailure.
void run_stage(const std::string& name, const config::PipelineConfig& config);

} // namespace i3c::pipeline
