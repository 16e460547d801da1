#include "formlab/trackio.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include <json.hpp>

namespace formlab::trackio {

namespace {

using json = nlohmann::json;

std::optional<double> parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

Possession parse_possession(std::string_view s, std::size_t line_no) {
    if (s == "H") return Possession::home;
    if (s == "A") return Possession::away;
    if (s == "N") return Possession::unassigned;
    throw Error(ErrorKind::parse,
                "line " + std::to_string(line_no) + ": possession must be H, A or N");
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

void check_monotone(const std::vector<TrackingFrame>& frames, std::size_t line_no) {
    if (frames.size() >= 2 && frames.back().t < frames[frames.size() - 2].t)
        throw Error(ErrorKind::parse,
                    "line " + std::to_string(line_no) + ": timestamps must be non-decreasing");
}

ParseResult parse_csv(std::istream& in) {
    ParseResult res;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw Error(ErrorKind::parse, "empty input file");
    ++line_no;  // header

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv(line);
        if (cells.size() != 1 + 2 * kPlayers + 2)
            throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": expected " +
                                              std::to_string(1 + 2 * kPlayers + 2) + " fields, got " +
                                              std::to_string(cells.size()));
        auto t = parse_double(cells[0]);
        if (!t)
            throw Error(ErrorKind::parse,
                        "line " + std::to_string(line_no) + ": bad timestamp '" + cells[0] + "'");

        TrackingFrame frame;
        frame.t = *t;
        frame.positions.reserve(kPlayers);
        bool incomplete = false;
        for (int p = 0; p < kPlayers; ++p) {
            const std::string& xs = cells[1 + 2 * p];
            const std::string& ys = cells[2 + 2 * p];
            bool x_blank = xs.empty() || xs == "\r";
            bool y_blank = ys.empty() || ys == "\r";
            if (x_blank && y_blank) {
                incomplete = true;  // untracked player, row dropped below
                continue;
            }
            auto x = parse_double(xs);
            auto y = parse_double(ys);
            if (!x || !y)
                throw Error(ErrorKind::parse, "line " + std::to_string(line_no) +
                                                  ": non-numeric coordinate for player " +
                                                  std::to_string(p + 1));
            if (!std::isfinite(*x) || !std::isfinite(*y)) {
                incomplete = true;
                continue;
            }
            frame.positions.emplace_back(*x, *y);
        }
        if (incomplete || static_cast<int>(frame.positions.size()) < kPlayers) {
            ++res.dropped_incomplete;
            continue;
        }
        frame.possession = parse_possession(cells[1 + 2 * kPlayers], line_no);
        frame.lineup_id = cells[2 + 2 * kPlayers];
        if (!frame.lineup_id.empty() && frame.lineup_id.back() == '\r') frame.lineup_id.pop_back();
        res.frames.push_back(std::move(frame));
        check_monotone(res.frames, line_no);
    }
    return res;
}

ParseResult parse_jsonl(std::istream& in) {
    ParseResult res;
    std::string line;
    std::size_t line_no = 0;
    bool any = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        any = true;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::parse,
                        "line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!obj.contains("t") || !obj.contains("xy") || !obj.contains("possession") ||
            !obj.contains("lineup"))
            throw Error(ErrorKind::parse, "line " + std::to_string(line_no) +
                                              ": frame object needs t, xy, possession, lineup");
        TrackingFrame frame;
        frame.t = obj.at("t").get<double>();
        const auto& xy = obj.at("xy");
        if (!xy.is_array())
            throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": xy must be an array");
        bool incomplete = xy.size() != kPlayers;
        for (const auto& pt : xy) {
            if (!pt.is_array() || pt.size() != 2)
                throw Error(ErrorKind::parse,
                            "line " + std::to_string(line_no) + ": xy entries must be [x, y]");
            if (pt[0].is_null() || pt[1].is_null()) {
                incomplete = true;
                continue;
            }
            double x = pt[0].get<double>();
            double y = pt[1].get<double>();
            if (!std::isfinite(x) || !std::isfinite(y)) {
                incomplete = true;
                continue;
            }
            frame.positions.emplace_back(x, y);
        }
        if (incomplete || static_cast<int>(frame.positions.size()) < kPlayers) {
            ++res.dropped_incomplete;
            continue;
        }
        frame.possession = parse_possession(obj.at("possession").get<std::string>(), line_no);
        frame.lineup_id = obj.at("lineup").get<std::string>();
        res.frames.push_back(std::move(frame));
        check_monotone(res.frames, line_no);
    }
    if (!any) throw Error(ErrorKind::parse, "empty input file");
    return res;
}

}  // namespace

ParseResult parse_tracking(const std::string& path, InputFormat format) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open input file: " + path);
    return format == InputFormat::csv ? parse_csv(in) : parse_jsonl(in);
}

std::vector<Segment> segment_by_lineup(const std::vector<TrackingFrame>& frames,
                                       double min_duration) {
    std::vector<Segment> out;
    std::size_t i = 0;
    while (i < frames.size()) {
        std::size_t j = i;
        while (j < frames.size() && frames[j].lineup_id == frames[i].lineup_id) ++j;
        Segment seg;
        seg.lineup_id = frames[i].lineup_id;
        seg.frames.assign(frames.begin() + i, frames.begin() + j);
        seg.duration = seg.frames.back().t - seg.frames.front().t;
        if (seg.duration >= min_duration) out.push_back(std::move(seg));
        i = j;
    }
    return out;
}

Segment subsample(const Segment& seg, int stride) {
    if (stride < 1) throw Error(ErrorKind::config, "stride must be >= 1");
    Segment out;
    out.lineup_id = seg.lineup_id;
    for (std::size_t i = 0; i < seg.frames.size(); i += stride) out.frames.push_back(seg.frames[i]);
    if (!out.frames.empty()) out.duration = out.frames.back().t - out.frames.front().t;
    return out;
}

Segment subsample_remainder(const Segment& seg, int stride) {
    if (stride < 1) throw Error(ErrorKind::config, "stride must be >= 1");
    Segment out;
    out.lineup_id = seg.lineup_id;
    for (std::size_t i = 0; i < seg.frames.size(); ++i)
        if (i % stride != 0) out.frames.push_back(seg.frames[i]);
    if (!out.frames.empty()) out.duration = out.frames.back().t - out.frames.front().t;
    return out;
}

Segment orient_attack_right(const Segment& seg, AttackSide side) {
    if (side == AttackSide::right) return seg;
    Segment out = seg;
    for (auto& frame : out.frames)
        for (auto& p : frame.positions) p = Vec2{-p.x, -p.y};
    return out;
}

NormalizedFrame normalize(const TrackingFrame& frame) {
    const auto d = frame.positions.size();
    if (d < 2) throw Error(ErrorKind::contract, "normalize needs at least 2 positions");
    Vec2 mean{0.0, 0.0};
    for (const auto& p : frame.positions) mean += p;
    mean = mean * (1.0 / double(d));
    Vec2 var{0.0, 0.0};
    for (const auto& p : frame.positions) {
        var.x += (p.x - mean.x) * (p.x - mean.x);
        var.y += (p.y - mean.y) * (p.y - mean.y);
    }
    var = var * (1.0 / double(d));  // population convention
    Vec2 sd{std::sqrt(var.x), std::sqrt(var.y)};
    if (sd.x < 1e-12 || sd.y < 1e-12)
        throw Error(ErrorKind::numeric, "degenerate frame: zero spread along an axis");

    NormalizedFrame nf;
    nf.frame_mean = mean;
    nf.frame_std = sd;
    nf.y.reserve(d);
    for (const auto& p : frame.positions)
        nf.y.emplace_back((p.x - mean.x) / sd.x, (p.y - mean.y) / sd.y);
    return nf;
}

std::vector<Vec2> denormalize(const NormalizedFrame& nf) {
    std::vector<Vec2> out;
    out.reserve(nf.y.size());
    for (const auto& z : nf.y)
        out.emplace_back(z.x * nf.frame_std.x + nf.frame_mean.x,
                         z.y * nf.frame_std.y + nf.frame_mean.y);
    return out;
}

}  // namespace formlab::trackio
