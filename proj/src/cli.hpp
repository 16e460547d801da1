#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "formlab/common.hpp"

namespace formlab::cli {

// Every tunable of the four-step procedure with its default.
struct PipelineConfig {
    int stride = 5;
    double min_segment_sec = 300.0;
    double p_thresh = 0.025;
    double o_thresh = 0.05;
    double alpha = 0.05;
    int gmm_components = 8;
    int regimes = 1;
    int max_iter = 200;
    double tol = 1e-7;
    double prune = 1e-10;
    std::uint64_t seed = 0;
    int threads = 1;  // 0 = auto-detect
    std::string attack_side = "right";
    std::string format = "csv";
    std::string init = "identity-half";  // multi-regime initialization mode

    void validate() const;
};

// Flat key = value subset of TOML: comments, quoted strings, numbers and
// booleans. Section headers are rejected; unknown keys are config errors.
PipelineConfig load_config_toml(const std::string& path, PipelineConfig base = {});

struct IngestStats {
    std::size_t raw_frames = 0;
    std::size_t dropped_incomplete = 0;
    std::size_t dropped_degenerate = 0;
    std::size_t segments = 0;
    std::size_t kept_frames = 0;
    std::size_t holdout_frames = 0;
};

IngestStats cmd_ingest(const std::string& input, const std::string& format, int stride,
                       double min_segment_sec, const std::string& attack_side,
                       const std::string& out);

void cmd_fit_shared(const std::string& frames_path, std::uint64_t seed, int max_iter, double tol,
                    const std::string& out);

void cmd_select_perms(const std::string& frames_path, const std::string& shared_path,
                      double p_thresh, double o_thresh, double alpha, int gmm_components,
                      std::uint64_t seed, int threads, const std::string& out);

void cmd_fit(const std::string& frames_path, const std::string& perms_path, int regimes,
             const std::string& init, int max_iter, double tol, double prune, int threads,
             const std::string& out);

void cmd_fit_hard(const std::string& frames_path, int max_iter, double tol,
                  const std::string& out);

void cmd_posteriors(const std::string& model_path, const std::string& frames_path,
                    const std::string& out);

void cmd_report(const std::string& model_path, const std::string& frames_path,
                const std::string& out_json);

double cmd_distance(const std::string& path_a, const std::string& path_b);

void cmd_cluster(const std::string& formations_dir, int k, int restarts, std::uint64_t seed,
                 int directions, const std::string& out, const std::string& team_csv);

void cmd_simulate(const std::string& model_path, std::size_t n, std::uint64_t seed,
                  const std::string& out, const std::string& latents_out);

void cmd_bench_two_role(const std::string& delta_spec, double p, std::size_t n, int reps,
                        std::uint64_t seed, int threads, const std::string& out);

struct PipelineArtifacts {
    std::string frames;
    std::string shared;
    std::string perms;
    std::string model;
    std::string model_one_regime;  // empty when regimes == 1
    std::string posteriors;
    std::string report;                     // aggregate report for multi-segment runs
    std::vector<std::string> segment_dirs;  // one bundle per segment when > 1 segment
};

// Runs the four-step procedure per lineup segment. A single-segment input
// writes its artifacts directly into out_dir; with several segments each
// gets a self-contained segment_NNN/ bundle and the top-level report
// aggregates no-swap probabilities and consecutive-segment formation
// distances.
PipelineArtifacts run_pipeline(const PipelineConfig& config, const std::string& input,
                               const std::string& out_dir);

}  // namespace formlab::cli
