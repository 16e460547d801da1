#include "formlab/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace formlab::serialize {

static_assert(std::endian::native == std::endian::little,
              "frames.bin writer assumes a little-endian host");

json formation_to_json(const gausscore::Formation& f) {
    json roles = json::array();
    for (const auto& role : f.roles) {
        roles.push_back(json{
            {"mu", {role.mu.x, role.mu.y}},
            {"sigma", {{role.sigma.a, role.sigma.b}, {role.sigma.c, role.sigma.d}}},
        });
    }
    return json{{"roles", roles}};
}

gausscore::Formation formation_from_json(const json& j) {
    gausscore::Formation f;
    for (const auto& role : j.at("roles")) {
        gausscore::RoleGaussian g;
        g.mu = Vec2{role.at("mu").at(0).get<double>(), role.at("mu").at(1).get<double>()};
        const auto& s = role.at("sigma");
        g.sigma = Mat2{s.at(0).at(0).get<double>(), s.at(0).at(1).get<double>(),
                       s.at(1).at(0).get<double>(), s.at(1).at(1).get<double>()};
        f.roles.push_back(g);
    }
    return f;
}

json shared_fit_to_json(const sharedgmm::SharedFit& fit, std::uint64_t seed) {
    return json{
        {"schema_version", kSchemaVersion},
        {"d", fit.formation.d()},
        {"seed", seed},
        {"formation", formation_to_json(fit.formation)},
        {"pi", fit.pi},
        {"loglik_trace", fit.loglik_trace},
        {"n_constructed", fit.n_constructed},
        {"reseed_events", fit.reseed_events},
    };
}

sharedgmm::SharedFit shared_fit_from_json(const json& j) {
    sharedgmm::SharedFit fit;
    fit.formation = formation_from_json(j.at("formation"));
    fit.pi = j.at("pi").get<std::vector<std::vector<double>>>();
    fit.loglik_trace = j.at("loglik_trace").get<std::vector<double>>();
    fit.n_constructed = j.at("n_constructed").get<std::size_t>();
    fit.reseed_events = j.value("reseed_events", 0);
    return fit;
}

namespace {

json bound_to_json(const permselect::OverlapBound& b) {
    return json{
        {"error_rate", b.error_rate},
        {"n_eval", b.n_eval},
        {"alpha", b.alpha},
        {"bound", b.bound},
    };
}

permselect::OverlapBound bound_from_json(const json& j) {
    permselect::OverlapBound b;
    b.error_rate = j.at("error_rate").get<double>();
    b.n_eval = j.at("n_eval").get<std::size_t>();
    b.alpha = j.at("alpha").get<double>();
    b.bound = j.at("bound").get<double>();
    return b;
}

}  // namespace

json candidate_set_to_json(const permselect::CandidateSet& set, int d) {
    json perms = json::array();
    for (std::size_t s = 0; s < set.perms.size(); ++s) {
        json entry{
            {"map", set.perms[s].map},
            {"min_pi_entry", set.provenance[s].min_pi_entry},
        };
        entry["qda"] = set.provenance[s].qda ? bound_to_json(*set.provenance[s].qda) : json();
        entry["gmm"] = set.provenance[s].gmm ? bound_to_json(*set.provenance[s].gmm) : json();
        perms.push_back(std::move(entry));
    }
    return json{{"schema_version", kSchemaVersion}, {"d", d}, {"perms", perms}};
}

permselect::CandidateSet candidate_set_from_json(const json& j) {
    permselect::CandidateSet set;
    for (const auto& entry : j.at("perms")) {
        gausscore::Permutation q;
        q.map = entry.at("map").get<std::vector<int>>();
        if (!q.is_valid()) throw Error(ErrorKind::parse, "perms.json entry is not a permutation");
        set.perms.push_back(std::move(q));
        permselect::PermProvenance prov;
        prov.min_pi_entry = entry.at("min_pi_entry").get<double>();
        if (entry.contains("qda") && !entry.at("qda").is_null())
            prov.qda = bound_from_json(entry.at("qda"));
        if (entry.contains("gmm") && !entry.at("gmm").is_null())
            prov.gmm = bound_from_json(entry.at("gmm"));
        set.provenance.push_back(std::move(prov));
    }
    return set;
}

json model_to_json(const permgmm::RegimeModel& model) {
    json regimes = json::array();
    for (const auto& regime : model.regimes) {
        json support = json::array();
        for (const auto& q : regime.perm_dist.support) support.push_back(q.map);
        regimes.push_back(json{
            {"v", regime.v},
            {"formation", formation_to_json(regime.formation)},
            {"support", support},
            {"weights", regime.perm_dist.weights},
        });
    }
    return json{
        {"schema_version", kSchemaVersion},
        {"d", model.d()},
        {"regimes", regimes},
        {"loglik_trace", model.loglik_trace},
        {"n_frames_fit", model.n_frames_fit},
    };
}

permgmm::RegimeModel model_from_json(const json& j) {
    permgmm::RegimeModel model;
    for (const auto& rj : j.at("regimes")) {
        permgmm::Regime regime;
        regime.v = rj.at("v").get<double>();
        regime.formation = formation_from_json(rj.at("formation"));
        for (const auto& mj : rj.at("support")) {
            gausscore::Permutation q;
            q.map = mj.get<std::vector<int>>();
            if (!q.is_valid())
                throw Error(ErrorKind::parse, "model.json support entry is not a permutation");
            if (q.is_identity())
                regime.perm_dist.identity_index =
                    static_cast<int>(regime.perm_dist.support.size());
            regime.perm_dist.support.push_back(std::move(q));
        }
        regime.perm_dist.weights = rj.at("weights").get<std::vector<double>>();
        if (regime.perm_dist.weights.size() != regime.perm_dist.support.size())
            throw Error(ErrorKind::parse, "model.json weights/support mismatch");
        model.regimes.push_back(std::move(regime));
    }
    model.loglik_trace = j.at("loglik_trace").get<std::vector<double>>();
    model.n_frames_fit = j.at("n_frames_fit").get<std::size_t>();
    return model;
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorKind::io, "write failed: " + path);
}

json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse, path + ": " + e.what());
    }
}

namespace {

constexpr char kMagic[4] = {'F', 'L', 'F', '1'};

template <class T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw Error(ErrorKind::parse, path + ": truncated frames file");
    return v;
}

}  // namespace

void write_frames(const std::string& path, const FrameFile& file) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path);
    out.write(kMagic, 4);
    put(out, file.d);
    put(out, static_cast<std::uint64_t>(file.records.size()));
    for (const auto& rec : file.records) {
        put(out, rec.segment_id);
        put(out, static_cast<std::uint8_t>(rec.possession));
        put(out, static_cast<std::uint8_t>(rec.holdout ? 1 : 0));
        put(out, static_cast<std::uint16_t>(0));
        put(out, rec.t);
        put(out, rec.frame.frame_mean.x);
        put(out, rec.frame.frame_mean.y);
        put(out, rec.frame.frame_std.x);
        put(out, rec.frame.frame_std.y);
        if (rec.frame.y.size() != file.d)
            throw Error(ErrorKind::contract, "frame row count does not match header d");
        for (const auto& p : rec.frame.y) {
            put(out, p.x);
            put(out, p.y);
        }
    }
    if (!out) throw Error(ErrorKind::io, "write failed: " + path);
}

FrameFile read_frames(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw Error(ErrorKind::parse, path + ": not a FLF1 frames file");
    FrameFile file;
    file.d = get<std::uint32_t>(in, path);
    auto count = get<std::uint64_t>(in, path);
    file.records.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        FrameRecord rec;
        rec.segment_id = get<std::uint32_t>(in, path);
        auto poss = get<std::uint8_t>(in, path);
        if (poss > 2) throw Error(ErrorKind::parse, path + ": bad possession byte");
        rec.possession = static_cast<trackio::Possession>(poss);
        rec.holdout = get<std::uint8_t>(in, path) != 0;
        get<std::uint16_t>(in, path);  // reserved
        rec.t = get<double>(in, path);
        rec.frame.frame_mean.x = get<double>(in, path);
        rec.frame.frame_mean.y = get<double>(in, path);
        rec.frame.frame_std.x = get<double>(in, path);
        rec.frame.frame_std.y = get<double>(in, path);
        rec.frame.y.resize(file.d);
        for (auto& p : rec.frame.y) {
            p.x = get<double>(in, path);
            p.y = get<double>(in, path);
        }
        file.records.push_back(std::move(rec));
    }
    return file;
}

std::vector<FrameMatrix> main_frames(const FrameFile& file) {
    std::vector<FrameMatrix> out;
    for (const auto& rec : file.records)
        if (!rec.holdout) out.push_back(rec.frame.y);
    return out;
}

std::vector<FrameMatrix> holdout_frames(const FrameFile& file) {
    std::vector<FrameMatrix> out;
    for (const auto& rec : file.records)
        if (rec.holdout) out.push_back(rec.frame.y);
    return out;
}

}  // namespace formlab::serialize
