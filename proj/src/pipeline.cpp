#include "dasleak/pipeline.hpp"

#include "dasleak/binary_io.hpp"
#include "dasleak/cube_io.hpp"
#include "dasleak/error.hpp"
#include "dasleak/nn/checkpoint.hpp"
#include "dasleak/nn/train.hpp"
#include "dasleak/recording_io.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <memory>
#include <unistd.h>

namespace dasleak {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::size_t kPredictBatch = 64;

/// Files are written under out_dir/.staging and moved into out_dir only on commit().
class StagedOutput {
public:
    StagedOutput(const fs::path& out_dir, bool force) : out_(out_dir) {
        std::error_code ec;
        if (fs::exists(out_) && !fs::is_directory(out_))
            throw DomainError("output path " + out_.string() + " exists and is not a directory");
        if (fs::exists(out_) && !fs::is_empty(out_) && !force)
            throw DomainError("output directory " + out_.string() + " is not empty; pass --force to overwrite");
        fs::create_directories(out_, ec);
        staging_ = out_ / (".staging-" + std::to_string(::getpid()));
        fs::remove_all(staging_, ec);
        if (!fs::create_directories(staging_, ec) || ec)
            throw IoError("cannot create output directory " + out_.string());
    }
    ~StagedOutput() {
        std::error_code ec;
        fs::remove_all(staging_, ec);
    }
    StagedOutput(const StagedOutput&) = delete;
    StagedOutput& operator=(const StagedOutput&) = delete;

    fs::path path(const std::string& name) const { return staging_ / name; }
    const fs::path& dir() const { return staging_; }

    /// Moves every staged file into place and returns their final paths, sorted.
    std::vector<fs::path> commit() {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(staging_))
            if (e.is_regular_file()) files.push_back(e.path().filename());
        std::sort(files.begin(), files.end());
        std::vector<fs::path> out;
        for (const auto& f : files) {
            fs::rename(staging_ / f, out_ / f);
            out.push_back(out_ / f);
        }
        return out;
    }

private:
    fs::path out_;
    fs::path staging_;
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

ojson optional_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(); }

ojson parse_json_file(const fs::path& path) {
    if (!fs::exists(path)) throw FormatError(path.string() + ": file not found");
    try {
        return ojson::parse(io::read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

struct CubeDirCase {
    std::string case_id;
    fs::path cubes;
    fs::path truth;
    std::size_t windows = 0;
};

struct CubeDir {
    std::size_t cube_depth = 0;
    std::size_t channel_count = 0;
    double channel_spacing = 0.0;
    double window_duration = 0.0;
    std::vector<CubeDirCase> cases;
};

CubeDir read_cube_dir(const fs::path& dir) {
    const auto path = dir / "cubes.json";
    const auto j = parse_json_file(path);
    try {
        CubeDir d;
        d.cube_depth = j.at("cube_depth").get<std::size_t>();
        d.channel_count = j.at("channel_count").get<std::size_t>();
        d.channel_spacing = j.at("channel_spacing_m").get<double>();
        d.window_duration = j.at("window_duration_s").get<double>();
        for (const auto& c : j.at("cases"))
            d.cases.push_back({c.at("case_id").get<std::string>(), dir / c.at("cubes").get<std::string>(),
                               dir / c.at("truth").get<std::string>(), c.at("windows").get<std::size_t>()});
        return d;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::vector<FileDigest> digest_files(const std::vector<fs::path>& files) {
    std::vector<FileDigest> out;
    for (const auto& f : files) out.push_back({f.string(), sha256_file(f)});
    return out;
}

void finish(RunManifest& run, StagedOutput& staged, const fs::path& out_dir, const Stopwatch& clock) {
    run.outputs = digest_files(staged.commit());
    run.wall_seconds = clock.seconds();
    io::write_text_file(out_dir / "run_manifest.json", run.to_json());
}

RunManifest start_run(const std::string& command, const ExperimentConfig& config) {
    config.validate();
    RunManifest run;
    run.command = command;
    run.config_sha256 = sha256_hex(config.to_ini());
    return run;
}

std::vector<CaseSpec> select_reference_cases(const ExperimentConfig& config) {
    auto all = reference_cases(config.simulation.duration, config.simulation.seed);
    if (config.simulation.cases.empty()) return all;
    std::vector<CaseSpec> chosen;
    for (auto n : config.simulation.cases) {
        require(n >= 1 && n <= all.size(), "case numbers must lie in 1..11");
        chosen.push_back(all[n - 1]);
    }
    return chosen;
}

} // namespace

bool is_test_window(std::string_view case_id, std::size_t window, const SplitSettings& split) {
    const std::uint64_t h = derive_seed(split.seed, hash_string(case_id), window);
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    return u < split.test_fraction;
}

FeaturizedCase featurize(const DasRecording& recording, const ExperimentConfig& config) {
    FeaturizedCase fc;
    fc.case_id = recording.truth.spec.case_id;
    fc.truth = recording.truth;
    fc.grid = compute_spectrograms(recording, config.features, config.threads);
    return fc;
}

std::vector<FeatureCube> window_cubes(const FeaturizedCase& fc, std::size_t window, const ExperimentConfig& config) {
    std::vector<FeatureCube> cubes;
    for (auto c : scored_channels(fc.grid.channels, config.model.cube_depth)) {
        auto cube = make_cube(fc.grid, c, window, config.model.cube_depth);
        cube.label = label_for_channel(fc.truth, c, fc.grid.channel_spacing, config.model.label_halo);
        cubes.push_back(std::move(cube));
    }
    return cubes;
}

bool is_training_cube(const FeatureCube& cube, const std::string& case_id, const GroundTruth& truth,
                      const ExperimentConfig& config) {
    return !is_test_window(case_id, cube.window_index, config.split) &&
           is_training_position(truth, cube.center_channel, cube.label);
}

std::vector<ScoredCube> score_case(const nn::Model& model, const FeaturizedCase& fc, const ExperimentConfig& config) {
    std::vector<ScoredCube> out;
    for (std::size_t w = 0; w < fc.grid.windows; ++w) {
        const auto cubes = window_cubes(fc, w, config);
        const auto probs = nn::predict(model, cubes, kPredictBatch);
        for (std::size_t i = 0; i < cubes.size(); ++i)
            out.push_back({w, cubes[i].center_channel, static_cast<double>(probs[i]), cubes[i].label});
    }
    return out;
}

CaseEvaluation evaluate_scores(const std::string& case_id, const GroundTruth& truth,
                               std::span<const ScoredCube> scores, std::size_t channel_count, double channel_spacing,
                               const ExperimentConfig& config) {
    CaseEvaluation ev;
    ev.case_id = case_id;
    ev.truth = truth;
    std::vector<Prediction> preds;
    preds.reserve(scores.size());
    for (const auto& s : scores) {
        preds.push_back({s.window, s.channel, s.probability});
        if (is_test_window(case_id, s.window, config.split))
            ev.test_counts.add(s.label == CubeLabel::Leak, s.probability, config.detect.threshold);
    }
    ev.map = assemble_map(preds, channel_count, channel_spacing, config.features.segment_length);
    ev.profile = median_profile(ev.map, config.detect.horizon);
    const auto finding = find_leak(ev.profile, config.detect.threshold);
    std::optional<double> leak_position;
    if (truth.spec.leak) leak_position = truth.spec.leak->position;
    ev.metrics = score_metrics(ev.test_counts, finding, leak_position);
    return ev;
}

HydraulicInputs hydraulic_inputs(const GroundTruth& truth, const ExperimentConfig& config) {
    HydraulicInputs in;
    in.pipe_flow_rate = truth.spec.flow.pipe_flow_rate;
    in.gauge_pressure = truth.spec.leak ? truth.spec.leak->gauge_pressure : config.quantify.gauge_pressure;
    in.discharge_coefficient =
        truth.spec.leak ? truth.spec.leak->discharge_coefficient : config.quantify.discharge_coefficient;
    if (!(in.pipe_flow_rate > 0.0)) throw FormatError("missing hydraulic inputs for case " + truth.spec.case_id);
    return in;
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw IoError("SHA-256 computation failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoError("SHA-256 setup failed");
    std::vector<char> buf(1 << 20);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

std::string RunManifest::to_json() const {
    ojson j;
    j["command"] = command;
    j["tool_version"] = tool_version;
    j["config_sha256"] = config_sha256;
    auto list = [](const std::vector<FileDigest>& files) {
        ojson arr = ojson::array();
        for (const auto& f : files) arr.push_back({{"path", f.path}, {"sha256", f.sha256}});
        return arr;
    };
    j["inputs"] = list(inputs);
    j["outputs"] = list(outputs);
    j["wall_seconds"] = wall_seconds;
    return j.dump(2) + "\n";
}

RunManifest cmd_simulate(const CommandContext& ctx, std::size_t sweep) {
    Stopwatch clock;
    auto run = start_run("simulate", ctx.config);
    const auto& cfg = ctx.config;
    std::vector<CaseSpec> cases;
    if (sweep > 0) {
        SweepSettings s;
        s.count = sweep;
        s.duration = cfg.simulation.duration;
        s.seed = cfg.simulation.seed;
        s.gauge_pressure = cfg.quantify.gauge_pressure;
        s.discharge_coefficient = cfg.quantify.discharge_coefficient;
        cases = sweep_cases(s, cfg.pipe);
    } else {
        cases = select_reference_cases(cfg);
    }
    StagedOutput staged(ctx.out_dir, ctx.force);
    build_dataset(cases, cfg.das, cfg.pipe, cfg.signal, staged.dir(), cfg.threads);
    finish(run, staged, ctx.out_dir, clock);
    return run;
}

RunManifest cmd_featurize(const CommandContext& ctx, const fs::path& dataset_dir) {
    Stopwatch clock;
    auto run = start_run("featurize", ctx.config);
    const auto& cfg = ctx.config;
    const auto manifest = read_manifest(dataset_dir / "manifest.json");
    // Validate every input before producing anything.
    std::vector<fs::path> recordings;
    for (const auto& e : manifest.entries) {
        const auto path = dataset_dir / e.recording;
        if (!fs::exists(truth_path_for(path))) throw FormatError(path.string() + ": missing ground-truth sidecar");
        recordings.push_back(path);
    }
    scored_channels(cfg.das.channel_count, cfg.model.cube_depth);
    run.inputs = digest_files(recordings);

    StagedOutput staged(ctx.out_dir, ctx.force);
    ojson index;
    index["cube_depth"] = cfg.model.cube_depth;
    std::size_t channel_count = 0;
    double spacing = 0.0;
    ojson cases = ojson::array();
    for (const auto& path : recordings) {
        const auto rec = read_recording(path);
        const auto fc = featurize(rec, cfg);
        const std::string id = fc.case_id;
        channel_count = rec.config.channel_count;
        spacing = rec.config.channel_spacing;
        const std::size_t per_window = scored_channels(fc.grid.channels, cfg.model.cube_depth).size();
        CubeFileWriter writer(staged.path(id + ".cubes"), cfg.model.cube_depth, fc.grid.bands, fc.grid.frames,
                              per_window * fc.grid.windows);
        for (std::size_t w = 0; w < fc.grid.windows; ++w)
            for (const auto& cube : window_cubes(fc, w, cfg)) writer.write(cube);
        writer.commit();
        write_truth(fc.truth, staged.path(id + ".truth"));
        cases.push_back({{"case_id", id},
                         {"cubes", id + ".cubes"},
                         {"truth", id + ".truth"},
                         {"windows", fc.grid.windows},
                         {"cube_count", per_window * fc.grid.windows}});
    }
    index["channel_count"] = channel_count;
    index["channel_spacing_m"] = spacing;
    index["window_duration_s"] = cfg.features.segment_length;
    index["cases"] = cases;
    io::write_text_file(staged.path("cubes.json"), index.dump(2) + "\n");
    finish(run, staged, ctx.out_dir, clock);
    return run;
}

RunManifest cmd_train(const CommandContext& ctx, const std::vector<fs::path>& cube_dirs) {
    Stopwatch clock;
    auto run = start_run("train", ctx.config);
    const auto& cfg = ctx.config;
    require(!cube_dirs.empty(), "train needs at least one cube directory");
    const auto spec = cfg.architecture();

    std::vector<FeatureCube> cubes;
    std::vector<fs::path> inputs;
    for (const auto& dir : cube_dirs) {
        const auto index = read_cube_dir(dir);
        if (index.cube_depth != spec.cube_depth)
            throw DomainError(dir.string() + " holds Z=" + std::to_string(index.cube_depth) + " cubes but the model expects Z=" +
                              std::to_string(spec.cube_depth));
        for (const auto& c : index.cases) {
            const auto truth = read_truth(c.truth);
            inputs.push_back(c.cubes);
            CubeFileReader reader(c.cubes);
            while (auto cube = reader.next())
                if (is_training_cube(*cube, c.case_id, truth, cfg)) cubes.push_back(std::move(*cube));
        }
    }
    const auto leak = std::count_if(cubes.begin(), cubes.end(), [](const auto& c) { return c.label == CubeLabel::Leak; });
    if (leak == 0 || static_cast<std::size_t>(leak) == cubes.size())
        throw DomainError("training split lacks " + std::string(leak == 0 ? "leak" : "non-leak") + " cubes");
    run.inputs = digest_files(inputs);

    StagedOutput staged(ctx.out_dir, ctx.force);
    auto model = nn::init_model<float>(spec, cfg.model.init_seed);
    auto result = nn::train(std::move(model), cubes, cfg.train, cfg.model.train_seed);
    nn::save_checkpoint(result.model, staged.path("model.dasm"));
    io::write_text_file(staged.path("history.json"), result.history.to_json());
    finish(run, staged, ctx.out_dir, clock);
    return run;
}

RunManifest cmd_evaluate(const CommandContext& ctx, const fs::path& checkpoint, const std::vector<fs::path>& cube_dirs) {
    Stopwatch clock;
    auto run = start_run("evaluate", ctx.config);
    const auto& cfg = ctx.config;
    require(!cube_dirs.empty(), "evaluate needs at least one cube directory");
    const auto model = nn::load_checkpoint(checkpoint);
    std::vector<CubeDir> dirs;
    std::vector<fs::path> inputs{checkpoint};
    for (const auto& dir : cube_dirs) {
        dirs.push_back(read_cube_dir(dir));
        if (dirs.back().cube_depth != model.spec.cube_depth)
            throw DomainError("checkpoint expects Z=" + std::to_string(model.spec.cube_depth) + " but " + dir.string() +
                              " holds Z=" + std::to_string(dirs.back().cube_depth) + " cubes");
        for (const auto& c : dirs.back().cases) inputs.push_back(c.cubes);
    }
    run.inputs = digest_files(inputs);

    StagedOutput staged(ctx.out_dir, ctx.force);
    ojson rows = ojson::array();
    RateCounts no_leak_total;
    std::map<std::string, RateCounts> by_level;
    for (const auto& dir : dirs) {
        for (const auto& c : dir.cases) {
            const auto truth = read_truth(c.truth);
            std::vector<ScoredCube> scores;
            CubeFileReader reader(c.cubes);
            std::vector<FeatureCube> batch;
            auto flush = [&] {
                const auto probs = nn::predict(model, batch, kPredictBatch);
                for (std::size_t i = 0; i < batch.size(); ++i)
                    scores.push_back({batch[i].window_index, batch[i].center_channel, static_cast<double>(probs[i]),
                                      batch[i].label});
                batch.clear();
            };
            while (auto cube = reader.next()) {
                batch.push_back(std::move(*cube));
                if (batch.size() == kPredictBatch) flush();
            }
            if (!batch.empty()) flush();
            const auto ev = evaluate_scores(c.case_id, truth, scores, dir.channel_count, dir.channel_spacing, cfg);
            io::write_text_file(staged.path(c.case_id + ".map.csv"), map_to_csv(ev.map, &ev.profile));
            io::write_text_file(staged.path(c.case_id + ".metrics.json"), metrics_to_json(ev.metrics));
            write_truth(truth, staged.path(c.case_id + ".truth"));

            const auto level = truth.spec.level();
            by_level[std::string(to_string(level))] += ev.test_counts;
            const auto& f = ev.metrics.finding;
            rows.push_back({{"case_id", c.case_id},
                            {"level", std::string(to_string(level))},
                            {"pipe_flow_m3s", truth.spec.flow.pipe_flow_rate},
                            {"leak_flow_m3s", truth.spec.flow.leak_flow_rate},
                            {"tpr", optional_json(ev.metrics.tpr)},
                            {"far", optional_json(ev.metrics.far)},
                            {"location_error_m", optional_json(ev.metrics.location_error)},
                            {"declared", f.declared},
                            {"center_m", f.declared ? ojson(f.center) : ojson()},
                            {"median_windows", ev.profile.windows_used},
                            {"median_horizon_clamped", ev.profile.clamped}});
        }
    }
    ojson summary;
    summary["variant"] = nn::to_string(model.spec.variant);
    summary["cube_depth"] = model.spec.cube_depth;
    summary["threshold"] = cfg.detect.threshold;
    summary["cases"] = rows;
    ojson agg;
    for (const auto& [level, counts] : by_level)
        agg[level] = {{"tpr", optional_json(counts.tpr())}, {"far", optional_json(counts.far())}};
    summary["by_level"] = agg;
    io::write_text_file(staged.path("evaluation.json"), summary.dump(2) + "\n");
    finish(run, staged, ctx.out_dir, clock);
    return run;
}

namespace {

struct EvaluatedCase {
    std::string case_id;
    GroundTruth truth;
    ProbabilityMap map;
};

std::vector<EvaluatedCase> read_evaluation_dir(const fs::path& dir, std::vector<fs::path>& inputs) {
    const auto summary = parse_json_file(dir / "evaluation.json");
    std::vector<EvaluatedCase> out;
    try {
        for (const auto& row : summary.at("cases")) {
            EvaluatedCase c;
            c.case_id = row.at("case_id").get<std::string>();
            const auto csv = dir / (c.case_id + ".map.csv");
            const auto truth = dir / (c.case_id + ".truth");
            if (!fs::exists(csv)) throw FormatError(csv.string() + ": probability map not found");
            if (!fs::exists(truth)) throw FormatError("missing hydraulic inputs: " + truth.string() + " not found");
            c.map = parse_map_csv(io::read_text_file(csv), csv.string()).map;
            c.truth = read_truth(truth);
            inputs.push_back(csv);
            inputs.push_back(truth);
            out.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError((dir / "evaluation.json").string() + ": " + e.what());
    }
    return out;
}

} // namespace

RunManifest cmd_quantify(const CommandContext& ctx, const std::vector<fs::path>& eval_dirs,
                         const std::vector<fs::path>& fit_dirs, const std::optional<fs::path>& range_model) {
    Stopwatch clock;
    auto run = start_run("quantify", ctx.config);
    const auto& cfg = ctx.config;
    require(!eval_dirs.empty(), "quantify needs at least one evaluation directory");
    require(fit_dirs.empty() != !range_model.has_value(), "quantify needs either fit directories or a range model");

    std::vector<fs::path> inputs;
    RangeModel model;
    if (range_model) {
        model = RangeModel::from_json(io::read_text_file(*range_model), range_model->string());
        inputs.push_back(*range_model);
    } else {
        std::vector<RangeSample> samples;
        for (const auto& dir : fit_dirs)
            for (const auto& c : read_evaluation_dir(dir, inputs))
                if (c.truth.spec.leak)
                    samples.push_back({mean_affected_range(c.map, cfg.quantify.averaging_time, cfg.detect.threshold),
                                       c.truth.spec.reynolds_ratio(cfg.pipe), c.case_id});
        model = fit_range_model(samples);
    }
    std::vector<EvaluatedCase> cases;
    for (const auto& dir : eval_dirs) {
        auto part = read_evaluation_dir(dir, inputs);
        cases.insert(cases.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    run.inputs = digest_files(inputs);

    StagedOutput staged(ctx.out_dir, ctx.force);
    std::vector<std::pair<LeakLevel, LeakLevel>> outcomes;
    ojson rows = ojson::array();
    for (const auto& c : cases) {
        const double range = mean_affected_range(c.map, cfg.quantify.averaging_time, cfg.detect.threshold);
        const auto q = quantify(range, model, cfg.pipe, hydraulic_inputs(c.truth, cfg));
        io::write_text_file(staged.path(c.case_id + ".quantified.json"), q.to_json());
        outcomes.emplace_back(c.truth.spec.level(), q.level);
        rows.push_back({{"case_id", c.case_id},
                        {"true_level", std::string(to_string(c.truth.spec.level()))},
                        {"predicted_level", std::string(to_string(q.level))},
                        {"affected_range_m", range},
                        {"estimated_leak_ratio", q.leak_ratio},
                        {"true_leak_ratio", c.truth.spec.flow.leak_ratio()}});
    }
    io::write_text_file(staged.path("range_model.json"), model.to_json());
    io::write_text_file(staged.path("truth_table.json"), truth_table(outcomes).to_json());
    io::write_text_file(staged.path("quantification.json"), ojson{{"cases", rows}}.dump(2) + "\n");
    finish(run, staged, ctx.out_dir, clock);
    return run;
}

} // namespace dasleak
