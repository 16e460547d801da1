#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "formlab/gausscore.hpp"
#include "formlab/permgmm.hpp"
#include "formlab/permselect.hpp"
#include "formlab/sharedgmm.hpp"
#include "formlab/trackio.hpp"

namespace formlab::serialize {

// ordered_json keeps key order stable so outputs are byte-reproducible.
using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

json formation_to_json(const gausscore::Formation& f);
gausscore::Formation formation_from_json(const json& j);

json shared_fit_to_json(const sharedgmm::SharedFit& fit, std::uint64_t seed);
sharedgmm::SharedFit shared_fit_from_json(const json& j);

json candidate_set_to_json(const permselect::CandidateSet& set, int d);
permselect::CandidateSet candidate_set_from_json(const json& j);

json model_to_json(const permgmm::RegimeModel& model);
permgmm::RegimeModel model_from_json(const json& j);

void write_json_file(const std::string& path, const json& j);
json read_json_file(const std::string& path);

// Normalized-frame container: magic "FLF1", little-endian fixed layout.
struct FrameRecord {
    std::uint32_t segment_id = 0;
    trackio::Possession possession = trackio::Possession::unassigned;
    bool holdout = false;  // true when the stride skipped this frame
    double t = 0.0;
    trackio::NormalizedFrame frame;
};

struct FrameFile {
    std::uint32_t d = 0;
    std::vector<FrameRecord> records;
};

void write_frames(const std::string& path, const FrameFile& file);
FrameFile read_frames(const std::string& path);

// Convenience splits used by the fitting stages.
std::vector<FrameMatrix> main_frames(const FrameFile& file);
std::vector<FrameMatrix> holdout_frames(const FrameFile& file);

}  // namespace formlab::serialize
