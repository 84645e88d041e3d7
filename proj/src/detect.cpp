#include "dasleak/detect.hpp"

#include "dasleak/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace dasleak {

namespace {

constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, sep)) out.push_back(cell);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

double parse_number(const std::string& cell, const std::string& source, std::size_t line) {
    double v = 0.0;
    const auto* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (ec != std::errc() || ptr != end)
        throw FormatError(source + ":" + std::to_string(line) + ": not a number: \"" + cell + "\"");
    return v;
}

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json();
}

} // namespace

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

bool ProbabilityMap::present(std::size_t window, std::size_t channel) const {
    return !std::isnan(at(window, channel));
}

std::size_t ProbabilityMap::scored_channel_count() const {
    std::size_t n = 0;
    for (std::size_t c = 0; c < channels; ++c) n += windows > 0 && present(0, c);
    return n;
}

ProbabilityMap assemble_map(std::span<const Prediction> predictions, std::size_t channel_count,
                            double channel_spacing, double window_duration) {
    require(!predictions.empty(), "cannot assemble a probability map from no predictions");
    require(channel_spacing > 0.0 && window_duration > 0.0, "map geometry must be positive");
    std::size_t windows = 0;
    for (const auto& p : predictions) {
        require(p.channel < channel_count, "prediction channel " + std::to_string(p.channel) + " outside the fiber");
        require(std::isfinite(p.probability) && p.probability >= 0.0 && p.probability <= 1.0,
                "prediction probability outside [0, 1]");
        windows = std::max(windows, p.window + 1);
    }
    ProbabilityMap map;
    map.windows = windows;
    map.channels = channel_count;
    map.channel_spacing = channel_spacing;
    map.window_duration = window_duration;
    map.values.assign(windows * channel_count, kAbsent);
    for (const auto& p : predictions) {
        double& cell = map.values[p.window * channel_count + p.channel];
        if (!std::isnan(cell) && cell != p.probability)
            throw DomainError("conflicting predictions for window " + std::to_string(p.window) + ", channel " +
                              std::to_string(p.channel));
        cell = p.probability;
    }
    for (std::size_t c = 0; c < channel_count; ++c) {
        const bool scored = map.present(0, c);
        for (std::size_t w = 1; w < windows; ++w)
            if (map.present(w, c) != scored)
                throw DomainError("predictions do not cover a rectangular window x channel grid (channel " +
                                  std::to_string(c) + ", window " + std::to_string(w) + ")");
    }
    if (map.scored_channel_count() == 0)
        throw DomainError("predictions do not cover a rectangular window x channel grid");
    return map;
}

MedianProfile median_profile(const ProbabilityMap& map, double horizon) {
    require(map.windows > 0, "median profile needs a non-empty map");
    require(std::isfinite(horizon) && horizon >= map.window_duration, "horizon must cover at least one window");
    const auto wanted = static_cast<std::size_t>(std::ceil(horizon / map.window_duration - 1e-9));
    MedianProfile profile;
    profile.channel_spacing = map.channel_spacing;
    profile.clamped = wanted > map.windows;
    profile.windows_used = std::min(wanted, map.windows);
    profile.values.assign(map.channels, kAbsent);
    std::vector<double> column(profile.windows_used);
    const std::size_t first = map.windows - profile.windows_used;
    for (std::size_t c = 0; c < map.channels; ++c) {
        if (!map.present(first, c)) continue;
        for (std::size_t i = 0; i < column.size(); ++i) column[i] = map.at(first + i, c);
        const auto mid = column.begin() + static_cast<std::ptrdiff_t>((column.size() - 1) / 2);
        std::nth_element(column.begin(), mid, column.end());
        profile.values[c] = *mid;
    }
    return profile;
}

std::optional<ChannelRun> widest_run(std::span<const double> values, double threshold) {
    std::optional<ChannelRun> best;
    std::size_t c = 0;
    while (c < values.size()) {
        if (!(values[c] > threshold)) {
            ++c;
            continue;
        }
        ChannelRun run{c, c, values[c]};
        while (run.last + 1 < values.size() && values[run.last + 1] > threshold) {
            ++run.last;
            run.peak = std::max(run.peak, values[run.last]);
        }
        if (!best || run.length() > best->length() || (run.length() == best->length() && run.peak > best->peak))
            best = run;
        c = run.last + 1;
    }
    return best;
}

LeakFinding find_leak(const MedianProfile& profile, double threshold) {
    LeakFinding finding;
    const auto run = widest_run(profile.values, threshold);
    if (!run) return finding;
    const double s = profile.channel_spacing;
    finding.declared = true;
    finding.first_channel = run->first;
    finding.last_channel = run->last;
    finding.peak_median = run->peak;
    finding.range_start = static_cast<double>(run->first) * s - s / 2.0;
    finding.range_end = static_cast<double>(run->last) * s + s / 2.0;
    finding.center = 0.5 * (static_cast<double>(run->first) + static_cast<double>(run->last)) * s;
    return finding;
}

void RateCounts::add(bool is_leak, double probability, double threshold) {
    const bool flagged = probability > threshold;
    if (is_leak) {
        ++leak_total;
        leak_hits += flagged;
    } else {
        ++nonleak_total;
        false_alarms += flagged;
    }
}

RateCounts& RateCounts::operator+=(const RateCounts& other) {
    leak_total += other.leak_total;
    leak_hits += other.leak_hits;
    nonleak_total += other.nonleak_total;
    false_alarms += other.false_alarms;
    return *this;
}

std::optional<double> RateCounts::tpr() const {
    if (leak_total == 0) return std::nullopt;
    return static_cast<double>(leak_hits) / static_cast<double>(leak_total);
}

std::optional<double> RateCounts::far() const {
    if (nonleak_total == 0) return std::nullopt;
    return static_cast<double>(false_alarms) / static_cast<double>(nonleak_total);
}

DetectionMetrics score_metrics(const RateCounts& counts, const LeakFinding& finding,
                               std::optional<double> true_leak_position) {
    DetectionMetrics m;
    m.tpr = counts.tpr();
    m.far = counts.far();
    m.finding = finding;
    if (true_leak_position && finding.declared) m.location_error = std::abs(finding.center - *true_leak_position);
    return m;
}

std::string metrics_to_json(const DetectionMetrics& metrics) {
    nlohmann::ordered_json j;
    j["tpr"] = optional_json(metrics.tpr);
    j["far"] = optional_json(metrics.far);
    j["location_error_m"] = optional_json(metrics.location_error);
    const auto& f = metrics.finding;
    j["affected_range_m"] =
        f.declared ? nlohmann::ordered_json::array({f.range_start, f.range_end}) : nlohmann::ordered_json();
    j["center_m"] = f.declared ? nlohmann::ordered_json(f.center) : nlohmann::ordered_json();
    j["declared"] = f.declared;
    return j.dump(2) + "\n";
}

std::string map_to_csv(const ProbabilityMap& map, const MedianProfile* profile) {
    std::string out = "window_start_s";
    for (std::size_t c = 0; c < map.channels; ++c) out += "," + format_double(map.channel_position(c));
    out += "\n";
    for (std::size_t w = 0; w < map.windows; ++w) {
        out += format_double(static_cast<double>(w) * map.window_duration);
        for (std::size_t c = 0; c < map.channels; ++c) {
            out += ",";
            if (map.present(w, c)) out += format_double(map.at(w, c));
        }
        out += "\n";
    }
    if (profile) {
        require(profile->values.size() == map.channels, "median profile does not match the map");
        out += "# median";
        for (double v : profile->values) {
            out += ",";
            if (!std::isnan(v)) out += format_double(v);
        }
        out += "\n";
    }
    return out;
}

ParsedMapCsv parse_map_csv(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw FormatError(source + ": empty probability map");
    const auto header = split(line, ',');
    if (header.size() < 2 || header[0] != "window_start_s")
        throw FormatError(source + ":1: missing probability-map header");
    std::vector<double> positions;
    for (std::size_t i = 1; i < header.size(); ++i) positions.push_back(parse_number(header[i], source, 1));

    ParsedMapCsv parsed;
    auto& map = parsed.map;
    map.channels = positions.size();
    map.channel_spacing = positions.size() > 1 ? positions[1] - positions[0] : 0.8;
    if (positions[0] != 0.0 || !(map.channel_spacing > 0.0))
        throw FormatError(source + ":1: channel positions must start at 0 and increase");
    for (std::size_t c = 0; c < positions.size(); ++c)
        if (std::abs(positions[c] - static_cast<double>(c) * map.channel_spacing) > 1e-9 * (1.0 + positions[c]))
            throw FormatError(source + ":1: channel positions are not evenly spaced");

    std::vector<double> times;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != map.channels + 1)
            throw FormatError(source + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(map.channels + 1) + " fields");
        std::vector<double> row;
        for (std::size_t i = 1; i < cells.size(); ++i) {
            if (cells[i].empty()) {
                row.push_back(kAbsent);
                continue;
            }
            const double v = parse_number(cells[i], source, line_no);
            if (!(v >= 0.0 && v <= 1.0))
                throw FormatError(source + ":" + std::to_string(line_no) + ": probability outside [0, 1]");
            row.push_back(v);
        }
        if (cells[0] == "# median") {
            parsed.median = std::move(row);
            continue;
        }
        if (parsed.median) throw FormatError(source + ":" + std::to_string(line_no) + ": data after the median row");
        times.push_back(parse_number(cells[0], source, line_no));
        map.values.insert(map.values.end(), row.begin(), row.end());
    }
    map.windows = times.size();
    if (map.windows == 0) throw FormatError(source + ": probability map has no windows");
    map.window_duration = map.windows > 1 ? times[1] - times[0] : 5.0;
    if (!(map.window_duration > 0.0)) throw FormatError(source + ": window times must increase");
    for (std::size_t c = 0; c < map.channels; ++c)
        for (std::size_t w = 1; w < map.windows; ++w)
            if (map.present(w, c) != map.present(0, c))
                throw FormatError(source + ": absent cells are not confined to whole channels");
    return parsed;
}

} // namespace dasleak
