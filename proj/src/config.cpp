#include "dasleak/config.hpp"

#include "dasleak/binary_io.hpp"
#include "dasleak/detect.hpp"
#include "dasleak/error.hpp"

#include <charconv>
#include <functional>
#include <sstream>

namespace dasleak {

namespace {

struct Field {
    const char* section;
    const char* key;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw DomainError("expected a number, got \"" + v + "\"");
    return out;
}

std::uint64_t to_u64(const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw DomainError("expected a non-negative integer, got \"" + v + "\"");
    return out;
}

bool to_bool(const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw DomainError("expected true or false, got \"" + v + "\"");
}

template <typename M>
Field real(const char* section, const char* key, M member) {
    return {section, key, [member](const ExperimentConfig& c) { return format_double(member(const_cast<ExperimentConfig&>(c))); },
            [member](ExperimentConfig& c, const std::string& v) { member(c) = to_double(v); }};
}

template <typename M>
Field count(const char* section, const char* key, M member) {
    return {section, key,
            [member](const ExperimentConfig& c) { return std::to_string(member(const_cast<ExperimentConfig&>(c))); },
            [member](ExperimentConfig& c, const std::string& v) {
                member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(to_u64(v));
            }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        using C = ExperimentConfig;
        std::vector<Field> f;
        f.push_back(real("das", "sampling_rate", [](C& c) -> double& { return c.das.sampling_rate; }));
        f.push_back(real("das", "channel_spacing", [](C& c) -> double& { return c.das.channel_spacing; }));
        f.push_back(real("das", "spatial_resolution", [](C& c) -> double& { return c.das.spatial_resolution; }));
        f.push_back(count("das", "channel_count", [](C& c) -> std::size_t& { return c.das.channel_count; }));
        f.push_back(real("das", "instrument_noise_rms", [](C& c) -> double& { return c.das.instrument_noise_rms; }));

        f.push_back(real("pipe", "internal_diameter", [](C& c) -> double& { return c.pipe.internal_diameter; }));
        f.push_back(real("pipe", "wall_thickness", [](C& c) -> double& { return c.pipe.wall_thickness; }));
        f.push_back(real("pipe", "sensed_length", [](C& c) -> double& { return c.pipe.sensed_length; }));
        f.push_back(real("pipe", "kinematic_viscosity", [](C& c) -> double& { return c.pipe.kinematic_viscosity; }));
        f.push_back(real("pipe", "water_density", [](C& c) -> double& { return c.pipe.water_density; }));

        f.push_back(real("signal", "flow_noise_gain", [](C& c) -> double& { return c.signal.flow_noise_gain; }));
        f.push_back(real("signal", "flow_corner_hz", [](C& c) -> double& { return c.signal.flow_corner_hz; }));
        f.push_back(real("signal", "flange_coupling", [](C& c) -> double& { return c.signal.flange_coupling; }));
        f.push_back(real("signal", "elbow_coupling", [](C& c) -> double& { return c.signal.elbow_coupling; }));
        f.push_back(real("signal", "leak_band_low_hz", [](C& c) -> double& { return c.signal.leak_band_low_hz; }));
        f.push_back(real("signal", "leak_band_high_hz", [](C& c) -> double& { return c.signal.leak_band_high_hz; }));
        f.push_back(real("signal", "leak_amplitude_gain", [](C& c) -> double& { return c.signal.leak_amplitude_gain; }));
        f.push_back(real("signal", "leak_decay_length", [](C& c) -> double& { return c.signal.leak_decay_length; }));

        f.push_back(real("simulation", "duration", [](C& c) -> double& { return c.simulation.duration; }));
        f.push_back(count("simulation", "seed", [](C& c) -> std::uint64_t& { return c.simulation.seed; }));
        f.push_back({"simulation", "cases",
                     [](const C& c) {
                         std::string s;
                         for (std::size_t i = 0; i < c.simulation.cases.size(); ++i)
                             s += (i ? "," : "") + std::to_string(c.simulation.cases[i]);
                         return s;
                     },
                     [](C& c, const std::string& v) {
                         c.simulation.cases.clear();
                         std::istringstream in(v);
                         std::string item;
                         while (std::getline(in, item, ','))
                             if (!trim(item).empty()) c.simulation.cases.push_back(to_u64(trim(item)));
                     }});

        f.push_back(real("features", "segment_length", [](C& c) -> double& { return c.features.segment_length; }));
        f.push_back(count("features", "window_length", [](C& c) -> std::size_t& { return c.features.window_length; }));
        f.push_back(count("features", "hop_length", [](C& c) -> std::size_t& { return c.features.hop_length; }));
        f.push_back(count("features", "mel_bands_total", [](C& c) -> std::size_t& { return c.features.mel_bands_total; }));
        f.push_back(count("features", "mel_bands_kept", [](C& c) -> std::size_t& { return c.features.mel_bands_kept; }));
        f.push_back(real("features", "fmin", [](C& c) -> double& { return c.features.fmin; }));
        f.push_back(real("features", "fmax", [](C& c) -> double& { return c.features.fmax; }));
        f.push_back({"features", "center_padding",
                     [](const C& c) { return std::string(c.features.center_padding ? "true" : "false"); },
                     [](C& c, const std::string& v) { c.features.center_padding = to_bool(v); }});

        f.push_back({"model", "variant", [](const C& c) { return nn::to_string(c.model.variant); },
                     [](C& c, const std::string& v) {
                         if (v == "2d") c.model.variant = nn::Variant::Cnn2D;
                         else if (v == "3d") c.model.variant = nn::Variant::Cnn3D;
                         else throw DomainError("variant must be 2d or 3d, got \"" + v + "\"");
                     }});
        f.push_back(count("model", "cube_depth", [](C& c) -> std::size_t& { return c.model.cube_depth; }));
        f.push_back(count("model", "init_seed", [](C& c) -> std::uint64_t& { return c.model.init_seed; }));
        f.push_back(count("model", "train_seed", [](C& c) -> std::uint64_t& { return c.model.train_seed; }));
        f.push_back(real("model", "label_halo", [](C& c) -> double& { return c.model.label_halo; }));

        f.push_back(count("train", "batch_size", [](C& c) -> std::size_t& { return c.train.batch_size; }));
        f.push_back(count("train", "epochs", [](C& c) -> std::size_t& { return c.train.epochs; }));
        f.push_back(real("train", "learning_rate", [](C& c) -> double& { return c.train.learning_rate; }));
        f.push_back(real("train", "beta1", [](C& c) -> double& { return c.train.beta1; }));
        f.push_back(real("train", "beta2", [](C& c) -> double& { return c.train.beta2; }));
        f.push_back(real("train", "epsilon", [](C& c) -> double& { return c.train.epsilon; }));
        f.push_back(real("train", "lr_decay", [](C& c) -> double& { return c.train.lr_decay; }));
        f.push_back(real("train", "l2_penalty", [](C& c) -> double& { return c.train.l2_penalty; }));
        f.push_back(count("train", "patience", [](C& c) -> std::size_t& { return c.train.patience; }));
        f.push_back(real("train", "min_delta", [](C& c) -> double& { return c.train.min_delta; }));
        f.push_back(real("train", "validation_fraction", [](C& c) -> double& { return c.train.validation_fraction; }));

        f.push_back(real("split", "test_fraction", [](C& c) -> double& { return c.split.test_fraction; }));
        f.push_back(count("split", "seed", [](C& c) -> std::uint64_t& { return c.split.seed; }));

        f.push_back(real("detect", "threshold", [](C& c) -> double& { return c.detect.threshold; }));
        f.push_back(real("detect", "horizon", [](C& c) -> double& { return c.detect.horizon; }));

        f.push_back(real("quantify", "gauge_pressure", [](C& c) -> double& { return c.quantify.gauge_pressure; }));
        f.push_back(real("quantify", "discharge_coefficient",
                         [](C& c) -> double& { return c.quantify.discharge_coefficient; }));
        f.push_back(real("quantify", "averaging_time", [](C& c) -> double& { return c.quantify.averaging_time; }));

        f.push_back(count("run", "threads", [](C& c) -> std::size_t& { return c.threads; }));
        return f;
    }();
    return table;
}

} // namespace

void ExperimentConfig::validate() const {
    das.validate();
    pipe.validate();
    signal.validate();
    features.validate(das.sampling_rate);
    train.validate();
    require(simulation.duration > 0.0, "simulation duration must be positive");
    for (auto c : simulation.cases) require(c >= 1 && c <= 11, "case numbers must lie in 1..11");
    architecture();
    require(model.label_halo >= 0.0, "label halo must be non-negative");
    require(split.test_fraction > 0.0 && split.test_fraction < 1.0, "test fraction must lie in (0, 1)");
    require(detect.threshold >= 0.0 && detect.threshold < 1.0, "detection threshold must lie in [0, 1)");
    require(detect.horizon >= features.segment_length, "median horizon must cover at least one window");
    require(quantify.gauge_pressure > 0.0 && quantify.discharge_coefficient > 0.0,
            "quantification needs positive gauge pressure and discharge coefficient");
    require(quantify.averaging_time > 0.0, "range averaging time must be positive");
    require(threads >= 1, "thread count must be at least 1");
}

nn::ArchitectureSpec ExperimentConfig::architecture() const {
    auto spec = nn::ArchitectureSpec::table(model.variant, model.cube_depth);
    require(spec.input_shape[0] == features.mel_bands_kept &&
                spec.input_shape[1] == features.frame_count(features.segment_samples(das.sampling_rate)),
            "feature geometry does not match the 90x98 network input");
    return spec;
}

std::string ExperimentConfig::to_ini() const {
    std::string out;
    std::string section;
    for (const auto& f : fields()) {
        if (section != f.section) {
            section = f.section;
            out += (out.empty() ? "[" : "\n[") + section + "]\n";
        }
        out += std::string(f.key) + " = " + f.get(*this) + "\n";
    }
    return out;
}

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& source) {
    ExperimentConfig config;
    std::istringstream in(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = source + ":" + std::to_string(line_no) + ": ";
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw DomainError(where + "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            bool known = false;
            for (const auto& f : fields()) known |= section == f.section;
            if (!known) throw DomainError(where + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw DomainError(where + "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) throw DomainError(where + "key outside any section");
        const Field* match = nullptr;
        for (const auto& f : fields())
            if (section == f.section && key == f.key) match = &f;
        if (!match) throw DomainError(where + "unknown key " + section + "." + key);
        try {
            match->set(config, value);
        } catch (const DomainError& e) {
            throw DomainError(where + section + "." + key + ": " + e.what());
        }
    }
    config.validate();
    return config;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    return parse(io::read_text_file(path), path.string());
}

} // namespace dasleak
