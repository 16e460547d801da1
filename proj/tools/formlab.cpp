#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cli.hpp"
#include "formlab/common.hpp"

namespace {

using formlab::cli::PipelineConfig;

struct PipelineCliArgs {
    std::string config_path;
    std::string input;
    std::string out_dir = ".";
    PipelineConfig flags;  // values captured by CLI11

    CLI::App* cmd = nullptr;
    CLI::Option *o_stride = nullptr, *o_min_seg = nullptr, *o_p = nullptr, *o_o = nullptr,
                *o_alpha = nullptr, *o_gmm = nullptr, *o_regimes = nullptr, *o_max_iter = nullptr,
                *o_tol = nullptr, *o_prune = nullptr, *o_seed = nullptr, *o_threads = nullptr,
                *o_side = nullptr, *o_format = nullptr, *o_init = nullptr;
};

// Config file first, command-line flags win.
PipelineConfig merge_config(const PipelineCliArgs& args) {
    PipelineConfig cfg;
    if (!args.config_path.empty()) cfg = formlab::cli::load_config_toml(args.config_path);
    if (args.o_stride->count()) cfg.stride = args.flags.stride;
    if (args.o_min_seg->count()) cfg.min_segment_sec = args.flags.min_segment_sec;
    if (args.o_p->count()) cfg.p_thresh = args.flags.p_thresh;
    if (args.o_o->count()) cfg.o_thresh = args.flags.o_thresh;
    if (args.o_alpha->count()) cfg.alpha = args.flags.alpha;
    if (args.o_gmm->count()) cfg.gmm_components = args.flags.gmm_components;
    if (args.o_regimes->count()) cfg.regimes = args.flags.regimes;
    if (args.o_max_iter->count()) cfg.max_iter = args.flags.max_iter;
    if (args.o_tol->count()) cfg.tol = args.flags.tol;
    if (args.o_prune->count()) cfg.prune = args.flags.prune;
    if (args.o_seed->count()) cfg.seed = args.flags.seed;
    if (args.o_threads->count()) cfg.threads = args.flags.threads;
    if (args.o_side->count()) cfg.attack_side = args.flags.attack_side;
    if (args.o_format->count()) cfg.format = args.flags.format;
    if (args.o_init->count()) cfg.init = args.flags.init;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"formlab: formation and role-assignment estimation from tracking data"};
    app.require_subcommand(1);

    PipelineConfig def;  // shared defaults

    // ingest
    std::string in_path, in_format = "csv", out_path, attack_side = "right";
    int stride = def.stride;
    double min_seg = def.min_segment_sec;
    auto* ingest = app.add_subcommand("ingest", "Parse, segment and normalize tracking data");
    ingest->add_option("--input", in_path)->required();
    ingest->add_option("--format", in_format)->check(CLI::IsMember({"csv", "jsonl"}));
    ingest->add_option("--stride", stride);
    ingest->add_option("--min-segment-sec", min_seg);
    ingest->add_option("--attack-side", attack_side)->check(CLI::IsMember({"left", "right"}));
    ingest->add_option("--out", out_path)->required();

    // fit-shared
    std::string frames_path, shared_out;
    std::uint64_t seed = 0;
    int max_iter = def.max_iter;
    double tol = def.tol;
    auto* fit_shared = app.add_subcommand("fit-shared", "Fit the shared-component mixture");
    fit_shared->add_option("--frames", frames_path)->required();
    fit_shared->add_option("--seed", seed);
    fit_shared->add_option("--max-iter", max_iter);
    fit_shared->add_option("--tol", tol);
    fit_shared->add_option("--out", shared_out)->required();

    // select-perms
    std::string sp_frames, sp_shared, sp_out;
    double p_thresh = def.p_thresh, o_thresh = def.o_thresh, alpha = def.alpha;
    int gmm_components = def.gmm_components, threads = 0;
    std::uint64_t sp_seed = 0;
    auto* select = app.add_subcommand("select-perms", "Select statistically relevant permutations");
    select->add_option("--frames", sp_frames)->required();
    select->add_option("--shared", sp_shared)->required();
    select->add_option("--p-thresh", p_thresh);
    select->add_option("--o-thresh", o_thresh);
    select->add_option("--alpha", alpha);
    select->add_option("--gmm-components", gmm_components);
    select->add_option("--seed", sp_seed);
    select->add_option("--threads", threads)->envname("FORMLAB_THREADS");
    select->add_option("--out", sp_out)->required();

    // fit
    std::string f_frames, f_perms, f_init, f_out;
    int f_regimes = 1, f_max_iter = def.max_iter, f_threads = 0;
    double f_tol = def.tol, f_prune = def.prune;
    std::uint64_t f_seed = 0;
    auto* fit = app.add_subcommand("fit", "Fit the mixture with hidden permutations");
    fit->add_option("--frames", f_frames)->required();
    fit->add_option("--perms", f_perms)->required();
    fit->add_option("--regimes", f_regimes);
    fit->add_option("--init", f_init)->required();
    fit->add_option("--max-iter", f_max_iter);
    fit->add_option("--tol", f_tol);
    fit->add_option("--prune", f_prune);
    fit->add_option("--seed", f_seed);  // accepted for interface stability; EM is deterministic
    fit->add_option("--threads", f_threads)->envname("FORMLAB_THREADS");
    fit->add_option("--out", f_out)->required();

    // fit-hard
    std::string fh_frames, fh_out;
    int fh_max_iter = def.max_iter;
    double fh_tol = def.tol;
    auto* fit_hard = app.add_subcommand("fit-hard", "Hard-assignment baseline estimator");
    fit_hard->add_option("--frames", fh_frames)->required();
    fit_hard->add_option("--max-iter", fh_max_iter);
    fit_hard->add_option("--tol", fh_tol);
    fit_hard->add_option("--out", fh_out)->required();

    // posteriors
    std::string po_model, po_frames, po_out;
    auto* posteriors = app.add_subcommand("posteriors", "Per-frame regime/permutation posteriors");
    posteriors->add_option("--model", po_model)->required();
    posteriors->add_option("--frames", po_frames)->required();
    posteriors->add_option("--out", po_out)->required();

    // report
    std::string rp_model, rp_frames, rp_out;
    auto* report = app.add_subcommand("report", "Summarize a fitted model");
    report->add_option("--model", rp_model)->required();
    report->add_option("--frames", rp_frames);
    report->add_option("--out", rp_out);

    // distance
    std::string d_a, d_b;
    auto* distance = app.add_subcommand("distance", "Mixture-Wasserstein distance between formations");
    distance->add_option("--a", d_a)->required();
    distance->add_option("--b", d_b)->required();

    // cluster
    std::string cl_dir, cl_out, cl_team_csv;
    int cl_k = 5, cl_restarts = 10, cl_dirs = 12;
    std::uint64_t cl_seed = 0;
    auto* cluster = app.add_subcommand("cluster", "K-means clustering of formation embeddings");
    cluster->add_option("--formations", cl_dir)->required();
    cluster->add_option("--k", cl_k);
    cluster->add_option("--restarts", cl_restarts);
    cluster->add_option("--directions", cl_dirs);
    cluster->add_option("--seed", cl_seed);
    cluster->add_option("--out", cl_out)->required();
    cluster->add_option("--team-csv", cl_team_csv);

    // simulate
    std::string sim_model, sim_out, sim_latents;
    std::size_t sim_n = 5000;
    std::uint64_t sim_seed = 0;
    auto* simulate = app.add_subcommand("simulate", "Draw frames from a fitted model");
    simulate->add_option("--model", sim_model)->required();
    simulate->add_option("--n", sim_n);
    simulate->add_option("--seed", sim_seed);
    simulate->add_option("--out", sim_out)->required();
    simulate->add_option("--latents-out", sim_latents);

    // bench-two-role
    std::string b_deltas = "0.1:2.0:0.1", b_out;
    double b_p = 0.2;
    std::size_t b_n = 5000;
    int b_reps = 100, b_threads = 0;
    std::uint64_t b_seed = 0;
    auto* bench = app.add_subcommand("bench-two-role", "Two-role overlap robustness experiment");
    bench->add_option("--deltas", b_deltas);
    bench->add_option("--p", b_p);
    bench->add_option("--n", b_n);
    bench->add_option("--reps", b_reps);
    bench->add_option("--seed", b_seed);
    bench->add_option("--threads", b_threads)->envname("FORMLAB_THREADS");
    bench->add_option("--out", b_out)->required();

    // pipeline
    PipelineCliArgs pl;
    pl.cmd = app.add_subcommand("pipeline", "Run ingest, fit-shared, select-perms and fit");
    pl.cmd->add_option("--config", pl.config_path);
    pl.cmd->add_option("--input", pl.input)->required();
    pl.cmd->add_option("--out-dir", pl.out_dir);
    pl.o_stride = pl.cmd->add_option("--stride", pl.flags.stride);
    pl.o_min_seg = pl.cmd->add_option("--min-segment-sec", pl.flags.min_segment_sec);
    pl.o_p = pl.cmd->add_option("--p-thresh", pl.flags.p_thresh);
    pl.o_o = pl.cmd->add_option("--o-thresh", pl.flags.o_thresh);
    pl.o_alpha = pl.cmd->add_option("--alpha", pl.flags.alpha);
    pl.o_gmm = pl.cmd->add_option("--gmm-components", pl.flags.gmm_components);
    pl.o_regimes = pl.cmd->add_option("--regimes", pl.flags.regimes);
    pl.o_max_iter = pl.cmd->add_option("--max-iter", pl.flags.max_iter);
    pl.o_tol = pl.cmd->add_option("--tol", pl.flags.tol);
    pl.o_prune = pl.cmd->add_option("--prune", pl.flags.prune);
    pl.o_seed = pl.cmd->add_option("--seed", pl.flags.seed);
    pl.o_threads = pl.cmd->add_option("--threads", pl.flags.threads)->envname("FORMLAB_THREADS");
    pl.o_side = pl.cmd->add_option("--attack-side", pl.flags.attack_side);
    pl.o_format = pl.cmd->add_option("--format", pl.flags.format);
    pl.o_init = pl.cmd->add_option("--init", pl.flags.init);

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest->parsed()) {
            auto stats = formlab::cli::cmd_ingest(in_path, in_format, stride, min_seg, attack_side,
                                                  out_path);
            std::cout << "frames: " << stats.raw_frames
                      << ", dropped incomplete: " << stats.dropped_incomplete
                      << ", dropped degenerate: " << stats.dropped_degenerate
                      << ", segments: " << stats.segments << ", kept: " << stats.kept_frames
                      << ", holdout: " << stats.holdout_frames << "\n";
        } else if (fit_shared->parsed()) {
            formlab::cli::cmd_fit_shared(frames_path, seed, max_iter, tol, shared_out);
        } else if (select->parsed()) {
            formlab::cli::cmd_select_perms(sp_frames, sp_shared, p_thresh, o_thresh, alpha,
                                           gmm_components, sp_seed, threads, sp_out);
        } else if (fit->parsed()) {
            formlab::cli::cmd_fit(f_frames, f_perms, f_regimes, f_init, f_max_iter, f_tol, f_prune,
                                  f_threads, f_out);
        } else if (fit_hard->parsed()) {
            formlab::cli::cmd_fit_hard(fh_frames, fh_max_iter, fh_tol, fh_out);
        } else if (posteriors->parsed()) {
            formlab::cli::cmd_posteriors(po_model, po_frames, po_out);
        } else if (report->parsed()) {
            formlab::cli::cmd_report(rp_model, rp_frames, rp_out);
        } else if (distance->parsed()) {
            formlab::cli::cmd_distance(d_a, d_b);
        } else if (cluster->parsed()) {
            formlab::cli::cmd_cluster(cl_dir, cl_k, cl_restarts, cl_seed, cl_dirs, cl_out,
                                      cl_team_csv);
        } else if (simulate->parsed()) {
            formlab::cli::cmd_simulate(sim_model, sim_n, sim_seed, sim_out, sim_latents);
        } else if (bench->parsed()) {
            formlab::cli::cmd_bench_two_role(b_deltas, b_p, b_n, b_reps, b_seed, b_threads, b_out);
        } else if (pl.cmd->parsed()) {
            auto art = formlab::cli::run_pipeline(merge_config(pl), pl.input, pl.out_dir);
            std::cout << "wrote " << art.frames << ", " << art.shared << ", " << art.perms << ", "
                      << art.model << ", " << art.posteriors << ", " << art.report << "\n";
        }
    } catch (const formlab::Error& e) {
        nlohmann::ordered_json err{{"error", {{"kind", e.kind_name()}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        nlohmann::ordered_json err{{"error", {{"kind", "internal"}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
