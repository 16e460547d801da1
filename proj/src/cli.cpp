#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "formlab/assign.hpp"
#include "formlab/formmetrics.hpp"
#include "formlab/parallel.hpp"
#include "formlab/permgmm.hpp"
#include "formlab/permselect.hpp"
#include "formlab/rng.hpp"
#include "formlab/serialize.hpp"
#include "formlab/sharedgmm.hpp"
#include "formlab/simlab.hpp"
#include "formlab/trackio.hpp"

namespace formlab::cli {

namespace fs = std::filesystem;
using serialize::json;

namespace {

// Shortest round-trip decimal form, so CSV output is byte-reproducible.
std::string fmt(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// RFC-4180 quoting for free-text fields.
std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

void check_unit_interval(double v, const char* name) {
    if (!(v > 0.0 && v < 1.0))
        throw Error(ErrorKind::config, std::string(name) + " must be in (0, 1)");
}

trackio::InputFormat parse_format(const std::string& s) {
    if (s == "csv") return trackio::InputFormat::csv;
    if (s == "jsonl") return trackio::InputFormat::jsonl;
    throw Error(ErrorKind::config, "format must be csv or jsonl");
}

trackio::AttackSide parse_side(const std::string& s) {
    if (s == "left") return trackio::AttackSide::left;
    if (s == "right") return trackio::AttackSide::right;
    throw Error(ErrorKind::config, "attack-side must be left or right");
}

}  // namespace

void PipelineConfig::validate() const {
    if (stride < 1) throw Error(ErrorKind::config, "stride must be >= 1");
    if (regimes < 1) throw Error(ErrorKind::config, "regimes must be >= 1");
    if (max_iter < 1) throw Error(ErrorKind::config, "max_iter must be >= 1");
    if (min_segment_sec < 0) throw Error(ErrorKind::config, "min_segment_sec must be >= 0");
    check_unit_interval(p_thresh, "p_thresh");
    check_unit_interval(o_thresh, "o_thresh");
    check_unit_interval(alpha, "alpha");
    if (gmm_components < 1) throw Error(ErrorKind::config, "gmm_components must be >= 1");
    if (!(tol >= 0.0)) throw Error(ErrorKind::config, "tol must be >= 0");
    if (!(prune >= 0.0)) throw Error(ErrorKind::config, "prune must be >= 0");
    if (threads < 0) throw Error(ErrorKind::config, "threads must be >= 0");
    parse_format(format);
    parse_side(attack_side);
    if (init != "possession" && init != "chrono" && init != "identity-half" &&
        init.rfind("shared:", 0) != 0)
        throw Error(ErrorKind::config, "init must be shared:<path>, possession, chrono or identity-half");
}

PipelineConfig load_config_toml(const std::string& path, PipelineConfig base) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open config file: " + path);
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) {
        throw Error(ErrorKind::config, path + ":" + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view s(line);
        auto hash = s.find('#');
        if (hash != std::string_view::npos) s = s.substr(0, hash);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
        if (s.empty()) continue;
        if (s.front() == '[') fail("sections are not supported; use flat keys");
        auto eq = s.find('=');
        if (eq == std::string_view::npos) fail("expected key = value");
        std::string key(s.substr(0, eq));
        std::string val(s.substr(eq + 1));
        auto trim = [](std::string& t) {
            while (!t.empty() && std::isspace(static_cast<unsigned char>(t.front()))) t.erase(0, 1);
            while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.pop_back();
        };
        trim(key);
        trim(val);
        if (val.size() >= 2 && val.front() == '"' && val.back() == '"')
            val = val.substr(1, val.size() - 2);

        auto as_int = [&](const char* name) {
            long long v = 0;
            auto [p, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
            if (ec != std::errc{} || p != val.data() + val.size())
                fail(std::string(name) + " must be an integer");
            return v;
        };
        auto as_double = [&](const char* name) {
            double v = 0.0;
            auto [p, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
            if (ec != std::errc{} || p != val.data() + val.size())
                fail(std::string(name) + " must be a number");
            return v;
        };

        if (key == "stride") base.stride = static_cast<int>(as_int("stride"));
        else if (key == "min_segment_sec") base.min_segment_sec = as_double("min_segment_sec");
        else if (key == "p_thresh") base.p_thresh = as_double("p_thresh");
        else if (key == "o_thresh") base.o_thresh = as_double("o_thresh");
        else if (key == "alpha") base.alpha = as_double("alpha");
        else if (key == "gmm_components") base.gmm_components = static_cast<int>(as_int("gmm_components"));
        else if (key == "regimes") base.regimes = static_cast<int>(as_int("regimes"));
        else if (key == "max_iter") base.max_iter = static_cast<int>(as_int("max_iter"));
        else if (key == "tol") base.tol = as_double("tol");
        else if (key == "prune") base.prune = as_double("prune");
        else if (key == "seed") base.seed = static_cast<std::uint64_t>(as_int("seed"));
        else if (key == "threads") base.threads = static_cast<int>(as_int("threads"));
        else if (key == "attack_side") base.attack_side = val;
        else if (key == "format") base.format = val;
        else if (key == "init") base.init = val;
        else fail("unknown key '" + key + "'");
    }
    return base;
}

IngestStats cmd_ingest(const std::string& input, const std::string& format, int stride,
                       double min_segment_sec, const std::string& attack_side,
                       const std::string& out) {
    auto fmt_enum = parse_format(format);
    auto side = parse_side(attack_side);
    if (stride < 1) throw Error(ErrorKind::config, "stride must be >= 1");

    auto parsed = trackio::parse_tracking(input, fmt_enum);
    IngestStats stats;
    stats.raw_frames = parsed.frames.size() + parsed.dropped_incomplete;
    stats.dropped_incomplete = parsed.dropped_incomplete;

    auto segments = trackio::segment_by_lineup(parsed.frames, min_segment_sec);
    stats.segments = segments.size();

    serialize::FrameFile file;
    file.d = trackio::kPlayers;
    for (std::size_t sid = 0; sid < segments.size(); ++sid) {
        auto oriented = trackio::orient_attack_right(segments[sid], side);
        for (std::size_t i = 0; i < oriented.frames.size(); ++i) {
            serialize::FrameRecord rec;
            rec.segment_id = static_cast<std::uint32_t>(sid);
            rec.possession = oriented.frames[i].possession;
            rec.holdout = (i % stride != 0);
            rec.t = oriented.frames[i].t;
            try {
                rec.frame = trackio::normalize(oriented.frames[i]);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::numeric) throw;
                ++stats.dropped_degenerate;
                continue;
            }
            if (rec.holdout)
                ++stats.holdout_frames;
            else
                ++stats.kept_frames;
            file.records.push_back(std::move(rec));
        }
    }
    serialize::write_frames(out, file);
    return stats;
}

void cmd_fit_shared(const std::string& frames_path, std::uint64_t seed, int max_iter, double tol,
                    const std::string& out) {
    auto file = serialize::read_frames(frames_path);
    auto frames = serialize::main_frames(file);
    auto ds = sharedgmm::build_independent_dataset(frames, seed);
    auto fit = sharedgmm::fit_shared_gmm(ds, sharedgmm::init_shared(frames), max_iter, tol);
    serialize::write_json_file(out, serialize::shared_fit_to_json(fit, seed));
}

void cmd_select_perms(const std::string& frames_path, const std::string& shared_path,
                      double p_thresh, double o_thresh, double alpha, int gmm_components,
                      std::uint64_t seed, int threads, const std::string& out) {
    auto file = serialize::read_frames(frames_path);
    auto shared = serialize::shared_fit_from_json(serialize::read_json_file(shared_path));
    permselect::SelectConfig cfg;
    cfg.p_thresh = p_thresh;
    cfg.o_thresh = o_thresh;
    cfg.alpha = alpha;
    cfg.gmm_components = gmm_components;
    cfg.seed = seed;
    cfg.threads = par::resolve_threads(threads);
    auto cands = permselect::select_permutations(serialize::main_frames(file),
                                                 serialize::holdout_frames(file), shared, cfg);
    serialize::write_json_file(out, serialize::candidate_set_to_json(cands, int(file.d)));
}

void cmd_fit(const std::string& frames_path, const std::string& perms_path, int regimes,
             const std::string& init, int max_iter, double tol, double prune, int threads,
             const std::string& out) {
    auto file = serialize::read_frames(frames_path);
    auto frames = serialize::main_frames(file);
    auto cands = serialize::candidate_set_from_json(serialize::read_json_file(perms_path));

    permgmm::FitOptions opts;
    opts.max_iter = max_iter;
    opts.tol = tol;
    opts.prune_threshold = prune;
    opts.threads = par::resolve_threads(threads);

    permgmm::RegimeModel model;
    if (regimes == 1) {
        if (init.rfind("shared:", 0) != 0)
            throw Error(ErrorKind::config, "one-regime fit needs --init shared:<shared.json>");
        auto shared =
            serialize::shared_fit_from_json(serialize::read_json_file(init.substr(7)));
        bool uniform = false;
        model = permgmm::init_one_regime(shared, cands.perms, &uniform);
        if (uniform)
            std::cerr << "warning: all candidate pi minima are zero; uniform weight init\n";
    } else {
        permgmm::MultiInitOptions mopts;
        mopts.subset_fit = opts;
        if (init == "possession") mopts.mode = permgmm::MultiInit::from_possession;
        else if (init == "chrono") mopts.mode = permgmm::MultiInit::chronological_split;
        else if (init == "identity-half") mopts.mode = permgmm::MultiInit::identity_half;
        else throw Error(ErrorKind::config, "multi-regime init must be possession, chrono or identity-half");
        std::vector<trackio::Possession> possession;
        for (const auto& rec : file.records)
            if (!rec.holdout) possession.push_back(rec.possession);
        model = permgmm::init_multi_regime(frames, possession, cands.perms, regimes, mopts);
    }
    model = permgmm::fit(frames, std::move(model), opts);
    serialize::write_json_file(out, serialize::model_to_json(model));
}

void cmd_fit_hard(const std::string& frames_path, int max_iter, double tol,
                  const std::string& out) {
    auto file = serialize::read_frames(frames_path);
    auto fit = assign::fit_hard_assignment(serialize::main_frames(file), max_iter, tol);
    serialize::write_json_file(out, serialize::formation_to_json(fit.formation));
}

void cmd_posteriors(const std::string& model_path, const std::string& frames_path,
                    const std::string& out) {
    auto model = serialize::model_from_json(serialize::read_json_file(model_path));
    auto file = serialize::read_frames(frames_path);
    std::vector<FrameMatrix> frames;
    std::vector<double> times;
    for (const auto& rec : file.records) {
        if (rec.holdout) continue;
        frames.push_back(rec.frame.y);
        times.push_back(rec.t);
    }
    auto es = permgmm::e_step(frames, model);

    std::vector<int> id_idx(model.n_regimes(), -1);
    for (int r = 0; r < model.n_regimes(); ++r)
        id_idx[r] = model.regimes[r].perm_dist.identity_index;

    std::ofstream os(out, std::ios::binary);
    if (!os) throw Error(ErrorKind::io, "cannot write " + out);
    os << "frame_index,t";
    for (int r = 0; r < model.n_regimes(); ++r) os << ",v_" << (r + 1);
    for (int r = 0; r < model.n_regimes(); ++r) os << ",w_identity_" << (r + 1);
    os << "\r\n";
    for (std::size_t i = 0; i < frames.size(); ++i) {
        os << i << ',' << fmt(times[i]);
        for (int r = 0; r < model.n_regimes(); ++r) os << ',' << fmt(es.posteriors[i].v_ir[r]);
        for (int r = 0; r < model.n_regimes(); ++r)
            os << ','
               << fmt(id_idx[r] >= 0 ? es.posteriors[i].w_irQ[r][id_idx[r]] : 0.0);
        os << "\r\n";
    }
    if (!os) throw Error(ErrorKind::io, "write failed: " + out);
}

namespace {

// Pearson correlation; empty when either side has no variance.
std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = double(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cab = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cab += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va <= 0.0 || vb <= 0.0) return std::nullopt;
    return cab / std::sqrt(va * vb);
}

json report_json(const permgmm::RegimeModel& model, const serialize::FrameFile* file) {
    json regimes = json::array();
    for (int r = 0; r < model.n_regimes(); ++r) {
        json entry{
            {"v", model.regimes[r].v},
            {"avg_permutation", permgmm::avg_permutation(model, r)},
        };
        if (model.d() >= 2)
            entry["overlap_index"] =
                formmetrics::formation_overlap_index(model.regimes[r].formation);
        regimes.push_back(std::move(entry));
    }
    json out{
        {"schema_version", serialize::kSchemaVersion},
        {"d", model.d()},
        {"regimes", regimes},
    };

    if (file) {
        std::vector<FrameMatrix> frames;
        std::vector<trackio::Possession> poss;
        for (const auto& rec : file->records) {
            if (rec.holdout) continue;
            frames.push_back(rec.frame.y);
            poss.push_back(rec.possession);
        }
        out["no_swap_probability"] = permgmm::no_swap_probability(model, frames);

        bool have_labels = false;
        for (auto p : poss) have_labels |= (p != trackio::Possession::unassigned);
        if (have_labels) {
            auto es = permgmm::e_step(frames, model);
            json corr = json::array();
            for (int r = 0; r < model.n_regimes(); ++r) {
                std::vector<double> v(frames.size());
                for (std::size_t i = 0; i < frames.size(); ++i) v[i] = es.posteriors[i].v_ir[r];
                json row{{"regime", r + 1}};
                const char* names[3] = {"home", "away", "unassigned"};
                for (int p = 0; p < 3; ++p) {
                    std::vector<double> ind(frames.size());
                    for (std::size_t i = 0; i < frames.size(); ++i)
                        ind[i] = poss[i] == static_cast<trackio::Possession>(p) ? 1.0 : 0.0;
                    auto c = pearson(v, ind);
                    row[names[p]] = c ? json(*c) : json();
                }
                corr.push_back(std::move(row));
            }
            out["possession_correlation"] = std::move(corr);
        }
    }
    return out;
}

void print_report(const json& rep, std::ostream& os) {
    os << "regimes: " << rep.at("regimes").size() << "\n";
    int r = 1;
    for (const auto& regime : rep.at("regimes")) {
        os << "regime " << r << ": v = " << regime.at("v").get<double>();
        if (regime.contains("overlap_index"))
            os << ", overlap index = " << regime.at("overlap_index").get<double>();
        os << "\n  avg permutation:\n";
        for (const auto& row : regime.at("avg_permutation")) {
            os << "   ";
            for (const auto& x : row) {
                char buf[16];
                std::snprintf(buf, sizeof(buf), " %6.3f", x.get<double>());
                os << buf;
            }
            os << "\n";
        }
        ++r;
    }
    if (rep.contains("no_swap_probability"))
        os << "no-swap probability: " << rep.at("no_swap_probability").get<double>() << "\n";
    if (rep.contains("possession_correlation")) {
        os << "possession correlation (regime vs indicator):\n";
        os << "  regime    home    away  unassigned\n";
        for (const auto& row : rep.at("possession_correlation")) {
            os << "  " << row.at("regime").get<int>();
            for (const char* key : {"home", "away", "unassigned"}) {
                if (row.at(key).is_null())
                    os << "      --";
                else {
                    char buf[16];
                    std::snprintf(buf, sizeof(buf), " %7.4f", row.at(key).get<double>());
                    os << buf;
                }
            }
            os << "\n";
        }
    }
}

}  // namespace

void cmd_report(const std::string& model_path, const std::string& frames_path,
                const std::string& out_json) {
    auto model = serialize::model_from_json(serialize::read_json_file(model_path));
    std::optional<serialize::FrameFile> file;
    if (!frames_path.empty()) file = serialize::read_frames(frames_path);
    json rep = report_json(model, file ? &*file : nullptr);
    print_report(rep, std::cout);
    if (!out_json.empty()) serialize::write_json_file(out_json, rep);
}

double cmd_distance(const std::string& path_a, const std::string& path_b) {
    auto fa = serialize::formation_from_json(serialize::read_json_file(path_a));
    auto fb = serialize::formation_from_json(serialize::read_json_file(path_b));
    double dist = formmetrics::mixture_wasserstein(fa, fb);
    std::cout << fmt(dist) << "\n";
    return dist;
}

void cmd_cluster(const std::string& formations_dir, int k, int restarts, std::uint64_t seed,
                 int directions, const std::string& out, const std::string& team_csv) {
    std::vector<std::string> paths;
    if (!fs::is_directory(formations_dir))
        throw Error(ErrorKind::io, formations_dir + " is not a directory");
    for (const auto& entry : fs::directory_iterator(formations_dir))
        if (entry.path().extension() == ".json") paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw Error(ErrorKind::insufficient_data, "no formation files found");

    std::vector<formmetrics::EmbeddingVector> embeddings;
    std::vector<std::string> teams;
    std::vector<double> weights;
    bool have_teams = true;
    for (const auto& path : paths) {
        auto j = serialize::read_json_file(path);
        embeddings.push_back(
            formmetrics::sliced_embedding(serialize::formation_from_json(j), directions));
        if (j.contains("team"))
            teams.push_back(j.at("team").get<std::string>());
        else
            have_teams = false;
        weights.push_back(j.contains("n_frames") ? j.at("n_frames").get<double>() : 1.0);
    }

    auto clusters = formmetrics::kmeans(embeddings, k, restarts, seed);

    json files = json::array();
    for (std::size_t i = 0; i < paths.size(); ++i) {
        files.push_back(json{
            {"path", fs::path(paths[i]).filename().string()},
            {"label", clusters.labels[i]},
        });
    }
    json reps = json::array();
    for (int c = 0; c < k; ++c)
        reps.push_back(json{
            {"cluster", c},
            {"path", fs::path(paths[clusters.representatives[c]]).filename().string()},
        });
    json out_json{
        {"schema_version", serialize::kSchemaVersion},
        {"k", k},
        {"inertia", clusters.inertia},
        {"files", files},
        {"representatives", reps},
    };

    if (have_teams && !teams.empty()) {
        // Time-in-cluster percentages per team, weighted by frame counts.
        std::vector<std::string> names = teams;
        std::sort(names.begin(), names.end());
        names.erase(std::unique(names.begin(), names.end()), names.end());
        json by_team = json::array();
        std::ostringstream csv;
        csv << "team,cluster,percent\r\n";
        for (const auto& name : names) {
            std::vector<double> mass(k, 0.0);
            double total = 0.0;
            for (std::size_t i = 0; i < teams.size(); ++i) {
                if (teams[i] != name) continue;
                mass[clusters.labels[i]] += weights[i];
                total += weights[i];
            }
            json row{{"team", name}};
            json pct = json::array();
            for (int c = 0; c < k; ++c) {
                double percent = 100.0 * mass[c] / total;
                pct.push_back(percent);
                csv << csv_field(name) << ',' << c << ',' << fmt(percent) << "\r\n";
            }
            row["percent_per_cluster"] = std::move(pct);
            by_team.push_back(std::move(row));
        }
        out_json["time_in_cluster"] = std::move(by_team);
        if (!team_csv.empty()) {
            std::ofstream os(team_csv, std::ios::binary);
            if (!os) throw Error(ErrorKind::io, "cannot write " + team_csv);
            os << csv.str();
        }
    }
    serialize::write_json_file(out, out_json);
}

void cmd_simulate(const std::string& model_path, std::size_t n, std::uint64_t seed,
                  const std::string& out, const std::string& latents_out) {
    auto model = serialize::model_from_json(serialize::read_json_file(model_path));
    auto sim = simlab::simulate({model, n, seed});

    serialize::FrameFile file;
    file.d = static_cast<std::uint32_t>(model.d());
    for (std::size_t i = 0; i < sim.frames.size(); ++i) {
        serialize::FrameRecord rec;
        rec.segment_id = 0;
        rec.possession = trackio::Possession::unassigned;
        rec.holdout = false;
        rec.t = double(i);
        rec.frame.y = sim.frames[i];
        rec.frame.frame_mean = Vec2{0.0, 0.0};
        rec.frame.frame_std = Vec2{1.0, 1.0};
        file.records.push_back(std::move(rec));
    }
    serialize::write_frames(out, file);

    if (!latents_out.empty()) {
        std::ofstream os(latents_out, std::ios::binary);
        if (!os) throw Error(ErrorKind::io, "cannot write " + latents_out);
        os << "frame_index,regime,perm_index\r\n";
        for (std::size_t i = 0; i < sim.frames.size(); ++i)
            os << i << ',' << sim.regime[i] << ',' << sim.perm_index[i] << "\r\n";
    }
}

void cmd_bench_two_role(const std::string& delta_spec, double p, std::size_t n, int reps,
                        std::uint64_t seed, int threads, const std::string& out) {
    // delta grid "start:stop:step"
    std::vector<double> deltas;
    {
        double start = 0.0, stop = 0.0, step = 0.0;
        std::istringstream ss(delta_spec);
        char c1 = 0, c2 = 0;
        if (!(ss >> start >> c1 >> stop >> c2 >> step) || c1 != ':' || c2 != ':' || step <= 0.0)
            throw Error(ErrorKind::config, "--deltas must be start:stop:step");
        for (double d = start; d <= stop + 0.5 * step; d += step) deltas.push_back(d);
    }
    auto rows = simlab::two_role_experiment(deltas, p, n, reps, seed,
                                            par::resolve_threads(threads));
    std::ofstream os(out, std::ios::binary);
    if (!os) throw Error(ErrorKind::io, "cannot write " + out);
    os << "delta,method,mse_mean,mse_std\r\n";
    for (const auto& row : rows)
        os << fmt(row.delta) << ',' << row.method << ',' << fmt(row.mse_mean) << ','
           << fmt(row.mse_std) << "\r\n";
}

namespace {

struct SegmentOutputs {
    std::string dir;
    std::string frames, shared, perms, model, model_one_regime, posteriors, report;
    std::size_t n_main_frames = 0;
    double no_swap = 0.0;
    gausscore::Formation one_regime_formation;
};

// The four-step procedure on one lineup segment, written into dir.
SegmentOutputs run_segment(const PipelineConfig& config, const serialize::FrameFile& records,
                           const std::string& dir, std::uint64_t seg_index) {
    fs::create_directories(dir);
    auto path = [&](const char* name) { return (fs::path(dir) / name).string(); };
    auto stage_seed = [&](std::uint64_t stage) {
        return derive_seed(config.seed, (seg_index << 8) | stage);
    };
    int threads = par::resolve_threads(config.threads);

    SegmentOutputs out;
    out.dir = dir;
    out.frames = path("frames.bin");
    out.shared = path("shared.json");
    out.perms = path("perms.json");
    out.model = path("model.json");
    out.posteriors = path("posteriors.csv");
    out.report = path("report.json");
    serialize::write_frames(out.frames, records);
    for (const auto& rec : records.records) out.n_main_frames += rec.holdout ? 0 : 1;

    cmd_fit_shared(out.frames, stage_seed(1), config.max_iter, config.tol, out.shared);
    cmd_select_perms(out.frames, out.shared, config.p_thresh, config.o_thresh, config.alpha,
                     config.gmm_components, stage_seed(2), threads, out.perms);

    std::string one_regime_model = out.model;
    if (config.regimes > 1) {
        out.model_one_regime = path("model_1regime.json");
        one_regime_model = out.model_one_regime;
    }
    cmd_fit(out.frames, out.perms, 1, "shared:" + out.shared, config.max_iter, config.tol,
            config.prune, threads, one_regime_model);
    if (config.regimes > 1)
        cmd_fit(out.frames, out.perms, config.regimes, config.init, config.max_iter, config.tol,
                config.prune, threads, out.model);

    cmd_posteriors(out.model, out.frames, out.posteriors);

    // Segment report, with the overlap-index comparison when both fits exist.
    auto model = serialize::model_from_json(serialize::read_json_file(out.model));
    json rep = report_json(model, &records);
    auto one = serialize::model_from_json(serialize::read_json_file(one_regime_model));
    out.one_regime_formation = one.regimes[0].formation;
    if (config.regimes > 1) {
        double bc1 = formmetrics::formation_overlap_index(one.regimes[0].formation);
        std::vector<double> bc_multi;
        for (const auto& regime : model.regimes)
            bc_multi.push_back(formmetrics::formation_overlap_index(regime.formation));
        std::sort(bc_multi.begin(), bc_multi.end());  // ordered by increasing overlap
        std::vector<double> deltas;
        for (double bc : bc_multi) deltas.push_back(bc - bc1);
        rep["bhattacharyya_comparison"] = json{
            {"bc_one_regime", bc1},
            {"bc_multi_regime", bc_multi},
            {"differences", deltas},
        };
    }
    out.no_swap = rep.at("no_swap_probability").get<double>();
    serialize::write_json_file(out.report, rep);
    return out;
}

}  // namespace

PipelineArtifacts run_pipeline(const PipelineConfig& config, const std::string& input,
                               const std::string& out_dir) {
    config.validate();
    fs::create_directories(out_dir);

    PipelineArtifacts art;
    art.frames = (fs::path(out_dir) / "frames.bin").string();
    cmd_ingest(input, config.format, config.stride, config.min_segment_sec, config.attack_side,
               art.frames);

    // Role identity only holds within one lineup, so every segment is
    // estimated on its own.
    auto all = serialize::read_frames(art.frames);
    std::vector<serialize::FrameFile> segments;
    for (const auto& rec : all.records) {
        if (segments.empty() || segments.back().records.back().segment_id != rec.segment_id) {
            segments.push_back(serialize::FrameFile{all.d, {}});
        }
        segments.back().records.push_back(rec);
    }
    if (segments.empty())
        throw Error(ErrorKind::insufficient_data, "no segments survived ingestion");

    if (segments.size() == 1) {
        auto seg = run_segment(config, segments[0], out_dir, 0);
        art.shared = seg.shared;
        art.perms = seg.perms;
        art.model = seg.model;
        art.model_one_regime = seg.model_one_regime;
        art.posteriors = seg.posteriors;
        art.report = seg.report;
        return art;
    }

    std::vector<SegmentOutputs> outputs;
    char name[32];
    for (std::size_t s = 0; s < segments.size(); ++s) {
        std::snprintf(name, sizeof(name), "segment_%03zu", s);
        outputs.push_back(
            run_segment(config, segments[s], (fs::path(out_dir) / name).string(), s));
        art.segment_dirs.push_back(outputs.back().dir);
    }
    art.shared = outputs[0].shared;
    art.perms = outputs[0].perms;
    art.model = outputs[0].model;
    art.model_one_regime = outputs[0].model_one_regime;
    art.posteriors = outputs[0].posteriors;

    // Aggregate report: frame-weighted no-swap probability plus the
    // formation distance across each consecutive segment pair.
    json seg_list = json::array();
    std::vector<double> no_swaps;
    std::vector<std::size_t> counts;
    std::vector<gausscore::Formation> formations;
    for (std::size_t s = 0; s < outputs.size(); ++s) {
        seg_list.push_back(json{
            {"segment", s},
            {"dir", fs::path(outputs[s].dir).filename().string()},
            {"n_frames", outputs[s].n_main_frames},
            {"no_swap_probability", outputs[s].no_swap},
        });
        no_swaps.push_back(outputs[s].no_swap);
        counts.push_back(outputs[s].n_main_frames);
        formations.push_back(outputs[s].one_regime_formation);
    }
    json distances = json::array();
    for (const auto& row : formmetrics::substitution_distance_report(formations)) {
        distances.push_back(json{
            {"from_segment", row.from_segment},
            {"to_segment", row.to_segment},
            {"distance", row.distance},
            {"first_substitution", row.first},
            {"last_substitution", row.last},
        });
    }
    json rep{
        {"schema_version", serialize::kSchemaVersion},
        {"d", int(all.d)},
        {"segments", seg_list},
        {"no_swap_probability", permgmm::weighted_no_swap(no_swaps, counts)},
        {"substitution_distances", distances},
    };
    art.report = (fs::path(out_dir) / "report.json").string();
    serialize::write_json_file(art.report, rep);
    return art;
}

}  // namespace formlab::cli
