#include "dasleak/recording_io.hpp"

#include "dasleak/binary_io.hpp"
#include "dasleak/error.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

namespace dasleak {

using nlohmann::json;

namespace {

std::optional<PositionTag> parse_tag(std::string_view s) {
    for (auto t : {PositionTag::StraightPipe, PositionTag::FlangeJoint, PositionTag::Elbow, PositionTag::LeakOrifice})
        if (to_string(t) == s) return t;
    return std::nullopt;
}

} // namespace

std::filesystem::path truth_path_for(const std::filesystem::path& recording_path) {
    auto p = recording_path;
    p.replace_extension(".truth");
    return p;
}

void write_recording(const DasRecording& recording, const std::filesystem::path& path) {
    const auto& cfg = recording.config;
    require(recording.samples.size() == cfg.channel_count * recording.samples_per_channel,
            "recording sample array does not match its geometry");
    {
        io::AtomicFile file(path);
        io::BinaryWriter w(file.stream());
        w.put_magic({kRecordingMagic, 4});
        w.put<std::uint16_t>(kRecordingVersion);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.channel_count));
        w.put<double>(cfg.sampling_rate);
        w.put<double>(cfg.channel_spacing);
        w.put<std::uint64_t>(recording.samples_per_channel);
        w.put_array<float>(recording.samples);
        file.commit();
    }
    write_truth(recording.truth, truth_path_for(path));
}

DasRecording read_recording(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open recording " + path.string());
    io::BinaryReader r(in, path.string());
    r.expect_magic({kRecordingMagic, 4});
    const auto version = r.get<std::uint16_t>("version");
    if (version != kRecordingVersion)
        throw FormatError(path.string() + ": unsupported recording version " + std::to_string(version));

    DasRecording rec;
    rec.config.channel_count = r.get<std::uint32_t>("channel count");
    rec.config.sampling_rate = r.get<double>("sample rate");
    rec.config.channel_spacing = r.get<double>("channel spacing");
    rec.samples_per_channel = r.get<std::uint64_t>("sample count");
    if (rec.config.channel_count == 0 || !(rec.config.sampling_rate > 0.0) || !(rec.config.channel_spacing > 0.0))
        throw FormatError(path.string() + ": invalid recording geometry");

    // Guard the allocation against a corrupted header.
    const auto header_bytes = static_cast<std::uintmax_t>(4 + 2 + 4 + 8 + 8 + 8);
    const auto payload = static_cast<std::uintmax_t>(rec.config.channel_count) * rec.samples_per_channel * 4;
    std::error_code ec;
    const auto file_size = std::filesystem::file_size(path, ec);
    if (ec || file_size != header_bytes + payload)
        throw FormatError(path.string() + ": file size does not match header (truncated or corrupted)");

    rec.samples.resize(rec.config.channel_count * rec.samples_per_channel);
    r.get_array<float>(rec.samples, "samples");
    for (float v : rec.samples)
        if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite sample");

    const auto truth_path = truth_path_for(path);
    if (!std::filesystem::exists(truth_path)) throw FormatError(path.string() + ": missing truth sidecar");
    rec.truth = read_truth(truth_path);
    if (rec.truth.layout.tags.size() != rec.config.channel_count)
        throw FormatError(truth_path.string() + ": position tags do not cover every channel");
    return rec;
}

std::string truth_to_json(const GroundTruth& truth) {
    const auto& s = truth.spec;
    json j;
    j["case_id"] = s.case_id;
    j["seed"] = s.seed;
    j["duration_s"] = s.duration;
    j["pipe_flow_rate_m3s"] = s.flow.pipe_flow_rate;
    j["leak_flow_rate_m3s"] = s.flow.leak_flow_rate;
    if (s.leak) {
        j["leak"] = {{"orifice_diameter_m", s.leak->orifice_diameter},
                     {"position_m", s.leak->position},
                     {"gauge_pressure_pa", s.leak->gauge_pressure},
                     {"discharge_coefficient", s.leak->discharge_coefficient}};
    } else {
        j["leak"] = nullptr;
    }
    json transients = json::array();
    for (const auto& t : s.transients)
        transients.push_back({{"position_m", t.position},
                              {"start_s", t.start},
                              {"duration_s", t.duration},
                              {"amplitude", t.amplitude},
                              {"seed", t.seed}});
    j["transients"] = transients;
    json tags = json::array();
    for (auto t : truth.layout.tags) tags.push_back(std::string(to_string(t)));
    j["position_tags"] = tags;
    j["reference_channels"] = truth.layout.reference_channels;
    return j.dump(2) + "\n";
}

GroundTruth truth_from_json(const std::string& text, const std::string& source) {
    try {
        const json j = json::parse(text);
        GroundTruth t;
        auto& s = t.spec;
        s.case_id = j.at("case_id").get<std::string>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.duration = j.at("duration_s").get<double>();
        s.flow.pipe_flow_rate = j.at("pipe_flow_rate_m3s").get<double>();
        s.flow.leak_flow_rate = j.at("leak_flow_rate_m3s").get<double>();
        if (!j.at("leak").is_null()) {
            const auto& l = j["leak"];
            LeakSpec leak;
            leak.orifice_diameter = l.at("orifice_diameter_m").get<double>();
            leak.position = l.at("position_m").get<double>();
            leak.gauge_pressure = l.at("gauge_pressure_pa").get<double>();
            leak.discharge_coefficient = l.at("discharge_coefficient").get<double>();
            s.leak = leak;
        }
        for (const auto& tj : j.at("transients")) {
            TransientSpec tr;
            tr.position = tj.at("position_m").get<double>();
            tr.start = tj.at("start_s").get<double>();
            tr.duration = tj.at("duration_s").get<double>();
            tr.amplitude = tj.at("amplitude").get<double>();
            tr.seed = tj.at("seed").get<std::uint64_t>();
            s.transients.push_back(tr);
        }
        for (const auto& tag : j.at("position_tags")) {
            auto parsed = parse_tag(tag.get<std::string>());
            if (!parsed) throw FormatError(source + ": unknown position tag");
            t.layout.tags.push_back(*parsed);
        }
        t.layout.reference_channels = j.at("reference_channels").get<std::vector<std::size_t>>();
        return t;
    } catch (const json::exception& e) {
        throw FormatError(source + ": malformed truth sidecar: " + e.what());
    }
}

GroundTruth read_truth(const std::filesystem::path& path) {
    return truth_from_json(io::read_text_file(path), path.string());
}

void write_truth(const GroundTruth& truth, const std::filesystem::path& path) {
    io::write_text_file(path, truth_to_json(truth));
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    json entries = json::array();
    for (const auto& e : manifest.entries)
        entries.push_back({{"case_id", e.case_id},
                           {"recording", e.recording},
                           {"truth", e.truth},
                           {"seed", e.seed},
                           {"pipe_flow_rate_m3s", e.pipe_flow_rate},
                           {"leak_flow_rate_m3s", e.leak_flow_rate},
                           {"orifice_diameter_m", e.orifice_diameter},
                           {"duration_s", e.duration}});
    io::write_text_file(path, json{{"cases", entries}}.dump(2) + "\n");
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    try {
        const json j = json::parse(io::read_text_file(path));
        DatasetManifest m;
        for (const auto& e : j.at("cases")) {
            ManifestEntry entry;
            entry.case_id = e.at("case_id").get<std::string>();
            entry.recording = e.at("recording").get<std::string>();
            entry.truth = e.at("truth").get<std::string>();
            entry.seed = e.at("seed").get<std::uint64_t>();
            entry.pipe_flow_rate = e.at("pipe_flow_rate_m3s").get<double>();
            entry.leak_flow_rate = e.at("leak_flow_rate_m3s").get<double>();
            entry.orifice_diameter = e.at("orifice_diameter_m").get<double>();
            entry.duration = e.at("duration_s").get<double>();
            m.entries.push_back(std::move(entry));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": malformed manifest: " + e.what());
    }
}

} // namespace dasleak
