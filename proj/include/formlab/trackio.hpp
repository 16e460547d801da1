#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "formlab/linalg.hpp"

namespace formlab::trackio {

// Outfield tracking always carries eleven players per frame.
inline constexpr int kPlayers = 11;

enum class Possession : std::uint8_t { home = 0, away = 1, unassigned = 2 };

enum class InputFormat { csv, jsonl };

struct TrackingFrame {
    double t = 0.0;
    std::vector<Vec2> positions;
    Possession possession = Possession::unassigned;
    std::string lineup_id;
};

struct ParseResult {
    std::vector<TrackingFrame> frames;
    std::size_t dropped_incomplete = 0;  // rows with fewer than kPlayers tracked players
};

ParseResult parse_tracking(const std::string& path, InputFormat format);

struct Segment {
    std::vector<TrackingFrame> frames;
    std::string lineup_id;
    double duration = 0.0;  // t_last - t_first
};

// Maximal runs of constant lineup_id; runs shorter than min_duration seconds
// are discarded.
std::vector<Segment> segment_by_lineup(const std::vector<TrackingFrame>& frames,
                                       double min_duration);

// Keeps frames at indices 0, stride, 2*stride, ...
Segment subsample(const Segment& seg, int stride);

// Complement of subsample: the frames the stride skipped.
Segment subsample_remainder(const Segment& seg, int stride);

enum class AttackSide { left, right };

// Reflects every position through the origin when the team attacks left, so
// downstream code can assume attack towards positive x.
Segment orient_attack_right(const Segment& seg, AttackSide side);

struct NormalizedFrame {
    FrameMatrix y;     // per-axis z-scores
    Vec2 frame_mean;   // meters, stored for invertibility
    Vec2 frame_std;    // meters (population convention)
};

// Per-frame z-scores with population (1/d) standard deviation.
// Throws a numeric error when an axis has zero spread.
NormalizedFrame normalize(const TrackingFrame& frame);

std::vector<Vec2> denormalize(const NormalizedFrame& nf);

}  // namespace formlab::trackio
