#include "dasleak/quantify.hpp"

#include "dasleak/error.hpp"

#include <json.hpp>

#include <cmath>
#include <numbers>

namespace dasleak {

namespace {

std::size_t level_row(LeakLevel level) { return static_cast<std::size_t>(level) - 1; }

constexpr LeakLevel kRows[3] = {LeakLevel::Small, LeakLevel::Significant, LeakLevel::Excessive};

} // namespace

std::string RangeModel::to_json() const {
    nlohmann::ordered_json j;
    j["a"] = a;
    j["b"] = b;
    j["r_squared"] = r_squared;
    j["fit_case_ids"] = fit_case_ids;
    return j.dump(2) + "\n";
}

RangeModel RangeModel::from_json(const std::string& text, const std::string& source) {
    try {
        const auto j = nlohmann::json::parse(text);
        RangeModel m;
        m.a = j.at("a").get<double>();
        m.b = j.at("b").get<double>();
        m.r_squared = j.at("r_squared").get<double>();
        m.fit_case_ids = j.at("fit_case_ids").get<std::vector<std::string>>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(source + ": " + e.what());
    }
}

RangeModel fit_range_model(std::span<const RangeSample> samples) {
    require(samples.size() >= 2, "range model needs at least two samples");
    double mx = 0.0, my = 0.0;
    for (const auto& s : samples) {
        require(std::isfinite(s.affected_range) && std::isfinite(s.re_ratio), "range samples must be finite");
        mx += s.re_ratio;
        my += s.affected_range;
    }
    const double n = static_cast<double>(samples.size());
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& s : samples) {
        const double dx = s.re_ratio - mx, dy = s.affected_range - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 1e-12 * (1.0 + mx * mx) * n)) throw DomainError("range model needs at least two distinct Reynolds ratios");
    RangeModel m;
    m.a = sxy / sxx;
    m.b = my - m.a * mx;
    double ss_res = 0.0;
    for (const auto& s : samples) {
        const double e = s.affected_range - (m.a * s.re_ratio + m.b);
        ss_res += e * e;
    }
    m.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
    for (const auto& s : samples) m.fit_case_ids.push_back(s.case_id);
    return m;
}

double window_affected_range(const ProbabilityMap& map, std::size_t window, double threshold) {
    require(window < map.windows, "window index outside the map");
    const auto run = widest_run(std::span<const double>(map.values).subspan(window * map.channels, map.channels),
                                threshold);
    return run ? static_cast<double>(run->length()) * map.channel_spacing : 0.0;
}

double mean_affected_range(const ProbabilityMap& map, double duration, double threshold) {
    require(duration > 0.0, "averaging duration must be positive");
    const auto needed = static_cast<std::size_t>(std::ceil(duration / map.window_duration - 1e-9));
    if (map.windows < needed)
        throw DomainError("map covers " + std::to_string(map.windows) + " windows but " + std::to_string(needed) +
                          " are needed for the range average");
    double total = 0.0;
    for (std::size_t w = map.windows - needed; w < map.windows; ++w) total += window_affected_range(map, w, threshold);
    return total / static_cast<double>(needed);
}

QuantifiedLeak quantify(double affected_range, const RangeModel& model, const PipeSpec& pipe,
                        const HydraulicInputs& inputs) {
    require(model.a > 0.0, "range model slope must be positive");
    require(std::isfinite(affected_range) && affected_range >= 0.0, "affected range must be non-negative");
    require(inputs.pipe_flow_rate > 0.0, "pipe flow rate must be positive");
    require(inputs.gauge_pressure > 0.0, "gauge pressure must be positive");
    require(inputs.discharge_coefficient > 0.0, "discharge coefficient must be positive");
    QuantifiedLeak q;
    q.affected_range = affected_range;
    q.re_ratio = std::max(0.0, (affected_range - model.b) / model.a);
    const double re_leak = q.re_ratio * reynolds_pipe(pipe, inputs.pipe_flow_rate);
    const double v = jet_velocity(inputs.gauge_pressure, inputs.discharge_coefficient, pipe.water_density);
    q.orifice_diameter = re_leak * pipe.kinematic_viscosity / v;
    q.leak_flow_rate = v * std::numbers::pi * q.orifice_diameter * q.orifice_diameter / 4.0;
    q.leak_ratio = q.leak_flow_rate / inputs.pipe_flow_rate;
    q.level = classify_leak_level(q.leak_ratio);
    return q;
}

std::string QuantifiedLeak::to_json() const {
    nlohmann::ordered_json j;
    j["affected_range_m"] = affected_range;
    j["estimated_re_ratio"] = re_ratio;
    j["estimated_orifice_diameter_m"] = orifice_diameter;
    j["estimated_leak_flow_m3s"] = leak_flow_rate;
    j["estimated_leak_ratio"] = leak_ratio;
    j["level"] = std::string(to_string(level));
    return j.dump(2) + "\n";
}

std::size_t TruthTable::row_total(std::size_t row) const {
    std::size_t n = missed.at(row);
    for (auto c : counts.at(row)) n += c;
    return n;
}

std::optional<double> TruthTable::accuracy(std::size_t row) const {
    const auto total = row_total(row);
    if (total == 0) return std::nullopt;
    return static_cast<double>(counts[row][row]) / static_cast<double>(total);
}

std::optional<double> TruthTable::overall_accuracy() const {
    std::size_t total = 0, correct = 0;
    for (std::size_t r = 0; r < 3; ++r) {
        total += row_total(r);
        correct += counts[r][r];
    }
    if (total == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(total);
}

std::string TruthTable::to_json() const {
    nlohmann::ordered_json j;
    j["levels"] = {"small", "significant", "excessive"};
    auto& rows = j["rows"] = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < 3; ++r) {
        nlohmann::ordered_json row;
        row["true_level"] = std::string(to_string(kRows[r]));
        row["predicted"] = counts[r];
        row["predicted_no_leak"] = missed[r];
        const auto acc = accuracy(r);
        row["accuracy"] = acc ? nlohmann::ordered_json(*acc) : nlohmann::ordered_json();
        rows.push_back(row);
    }
    const auto overall = overall_accuracy();
    j["overall_accuracy"] = overall ? nlohmann::ordered_json(*overall) : nlohmann::ordered_json();
    return j.dump(2) + "\n";
}

TruthTable truth_table(std::span<const std::pair<LeakLevel, LeakLevel>> outcomes) {
    TruthTable t;
    for (const auto& [truth, predicted] : outcomes) {
        if (truth == LeakLevel::NoLeak) continue;
        if (predicted == LeakLevel::NoLeak)
            ++t.missed[level_row(truth)];
        else
            ++t.counts[level_row(truth)][level_row(predicted)];
    }
    return t;
}

} // namespace dasleak
