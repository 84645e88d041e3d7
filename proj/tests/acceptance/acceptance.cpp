// Acceptance run: prints one PASS/FAIL line per criterion, with indented
// detail lines underneath. Usage: acceptance [criterion numbers...]

#include "dasleak/cube_io.hpp"
#include "dasleak/error.hpp"
#include "dasleak/fft.hpp"
#include "dasleak/nn/checkpoint.hpp"
#include "dasleak/nn/train.hpp"
#include "dasleak/pipeline.hpp"
#include "dasleak/recording_io.hpp"

#include "../support/oracles.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <unistd.h>

using namespace dasleak;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
    bool pass = true;
    std::vector<std::string> details;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        details.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
    }
    void note(const std::string& what) { details.push_back("     " + what); }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string pct(std::optional<double> v) { return v ? fmt("%.2f%%", 100 * *v) : "n/a"; }

// Everything below runs on the default configuration except for the
// training schedule, which is shortened to fit a desk-scale budget.
ExperimentConfig acceptance_config() {
    ExperimentConfig cfg;
    cfg.train.epochs = 8;
    cfg.train.batch_size = 32;
    return cfg;
}

// ---------------------------------------------------------------------------

Outcome criterion_reynolds() {
    struct Row {
        double q, ql, d, re_pipe, re_leak, ratio;
    };
    const Row rows[] = {
        {0.427, 0.319, 3.72, 10837, 108987, 10.06}, {0.427, 0.261, 3.36, 10837, 98657, 9.10},
        {0.427, 0.102, 2.15, 10837, 60418, 5.58},   {1.800, 0.399, 4.63, 45674, 109347, 2.39},
        {1.800, 0.257, 3.72, 45674, 87663, 1.92},   {1.800, 0.209, 3.36, 45674, 78918, 1.73},
        {0.427, 0.034, 1.22, 10837, 35233, 3.25},   {1.800, 0.084, 2.15, 45674, 49696, 1.09},
        {1.800, 0.027, 1.22, 45674, 28445, 0.62},
    };
    Outcome out;
    const PipeSpec pipe;
    double worst_pipe = 0, worst_leak = 0, worst_ratio = 0;
    for (const auto& r : rows) {
        const double rp = reynolds_pipe(pipe, r.q * 1e-3);
        const double rl = reynolds_leak(pipe, r.ql * 1e-3, r.d * 1e-3);
        worst_pipe = std::max(worst_pipe, std::abs(rp / r.re_pipe - 1));
        worst_leak = std::max(worst_leak, std::abs(rl / r.re_leak - 1));
        worst_ratio = std::max(worst_ratio, std::abs(rl / rp - r.ratio));
    }
    // the two leak-free rows share the pipe Reynolds numbers
    worst_pipe = std::max(worst_pipe, std::abs(reynolds_pipe(pipe, 0.427e-3) / 10837 - 1));
    worst_pipe = std::max(worst_pipe, std::abs(reynolds_pipe(pipe, 1.8e-3) / 45674 - 1));
    out.check(worst_pipe < 0.005, "pipe Re worst relative error " + fmt("%.4f%%", 100 * worst_pipe) + " (< 0.5%)");
    out.check(worst_leak < 0.02, "leak Re worst relative error " + fmt("%.4f%%", 100 * worst_leak) + " (< 2%)");
    out.check(worst_ratio < 0.05, "Re ratio worst absolute error " + fmt("%.4f", worst_ratio) + " (< 0.05)");
    return out;
}

Outcome criterion_geometry() {
    Outcome out;
    FeatureParams p;
    MelExtractor ex(p, 10000.0);
    Rng rng(1);
    std::vector<double> clip(p.segment_samples(10000.0));
    for (auto& v : clip) v = rng.normal();
    const auto mel = ex.compute(clip);
    out.check(clip.size() == 50000, "5-s clip at 10 kHz has " + std::to_string(clip.size()) + " samples");
    out.check(mel.frames == 98 && mel.bands == 90,
              "mel spectrogram " + std::to_string(mel.bands) + " bands x " + std::to_string(mel.frames) + " frames");

    // small synthetic grid, cubes for every depth
    DasRecording rec;
    rec.config.channel_count = 11;
    rec.samples_per_channel = 50000;
    rec.samples.resize(11 * 50000);
    for (auto& v : rec.samples) v = static_cast<float>(rng.normal());
    const auto grid = compute_spectrograms(rec, p);
    for (std::size_t z : {3ul, 5ul, 7ul, 9ul}) {
        const auto cube = make_cube(grid, 5, 0, z);
        out.check(cube.bands == 90 && cube.frames == 98 && cube.depth == z,
                  "cube Z=" + std::to_string(z) + " is 90x98x" + std::to_string(cube.depth));
        for (auto variant : {nn::Variant::Cnn2D, nn::Variant::Cnn3D}) {
            const auto spec = nn::ArchitectureSpec::table(variant, z);
            const auto trace = nn::shape_trace(spec);
            bool positive = true;
            for (const auto& l : trace)
                for (auto d : l.shape) positive = positive && d > 0;
            std::ostringstream s;
            for (const auto& l : trace)
                if (l.name.rfind("pool", 0) == 0 || l.name == "gap")
                    s << " " << l.name << "=" << l.shape[0] << "x" << l.shape[1] << "x" << l.shape[2] << "x" << l.shape[3];
            out.check(positive, nn::to_string(variant) + " Z=" + std::to_string(z) + ":" + s.str());
        }
    }
    return out;
}

Outcome criterion_gradients() {
    Outcome out;
    const auto r = oracle::gradient_check(10, 1e-3);
    out.note("checked " + std::to_string(r.checked) + " parameters, stencils crossing a ReLU/pool switch: " +
             std::to_string(r.kinks_crossed));
    out.check(r.kinks_crossed == 0, "fixture is smooth within +-h for every parameter");
    out.check(r.worst_relative_error < 1e-4,
              "worst relative error " + fmt("%.3e", r.worst_relative_error) + " at " + r.worst_parameter + " (< 1e-4)");
    return out;
}

Outcome criterion_stft() {
    Outcome out;
    Rng rng(2048);
    std::vector<double> frame(2048);
    for (auto& v : frame) v = rng.normal();
    RealFft fft(2048);
    std::vector<std::complex<double>> spec(fft.bins());
    fft.forward(frame, spec);
    const auto want = oracle::dft_magnitudes(frame);
    double worst = 0;
    for (std::size_t k = 0; k < spec.size(); ++k)
        worst = std::max(worst, std::abs(std::abs(spec[k]) - want[k]) / want[k]);
    out.check(worst < 1e-5, "FFT vs DFT worst bin relative error " + fmt("%.3e", worst));

    // the same through the feature extractor's STFT (Hann, reflect padding)
    FeatureParams p;
    MelExtractor ex(p, 10000.0);
    std::vector<double> clip(50000);
    for (auto& v : clip) v = rng.normal();
    const auto mags = ex.stft_magnitudes(clip);
    const std::size_t t = 37;
    std::vector<double> windowed(2048);
    for (std::size_t i = 0; i < 2048; ++i)
        windowed[i] = 0.5 * (1 - std::cos(2 * std::numbers::pi * double(i) / 2048.0)) * clip[t * 512 - 1024 + i];
    const auto ref = oracle::dft_magnitudes(windowed);
    double worst_stft = 0;
    for (std::size_t k = 0; k < ref.size(); ++k)
        worst_stft = std::max(worst_stft, std::abs(mags[t][k] - ref[k]) / std::max(ref[k], 1e-12));
    out.check(worst_stft < 1e-5, "STFT frame 37 vs windowed DFT worst relative error " + fmt("%.3e", worst_stft));
    return out;
}

// ---------------------------------------------------------------------------
// Shared synthetic corpus for criteria 5-8.

struct Corpus {
    ExperimentConfig cfg = acceptance_config();
    std::vector<FeaturizedCase> cases;
    std::vector<FeatureCube> training;
    std::optional<nn::Model> model3d, model2d;
    std::vector<std::vector<ScoredCube>> scores3d;
    double build_seconds = 0, train_seconds = 0, score_seconds = 0;
};

Corpus& corpus() {
    static Corpus c;
    return c;
}

void build_corpus(Corpus& c) {
    if (!c.cases.empty()) return;
    const auto t0 = Clock::now();
    for (const auto& spec : reference_cases(c.cfg.simulation.duration, c.cfg.simulation.seed)) {
        const auto rec = simulate_case(spec, c.cfg.das, c.cfg.pipe, c.cfg.signal);
        auto fc = featurize(rec, c.cfg);
        for (std::size_t w = 0; w < fc.grid.windows; ++w)
            for (auto& cube : window_cubes(fc, w, c.cfg))
                if (is_training_cube(cube, fc.case_id, fc.truth, c.cfg)) c.training.push_back(std::move(cube));
        c.cases.push_back(std::move(fc));
    }
    c.build_seconds = seconds_since(t0);
}

nn::Model train_variant(const Corpus& c, nn::Variant variant, double& seconds) {
    const auto t0 = Clock::now();
    const auto spec = nn::ArchitectureSpec::table(variant, c.cfg.model.cube_depth);
    auto result = nn::train(nn::init_model<float>(spec, c.cfg.model.init_seed), c.training, c.cfg.train,
                            c.cfg.model.train_seed, [&](const nn::EpochRecord& e) {
                                std::fprintf(stderr, "  [%s] epoch %zu train %.4f val %.4f acc %.3f (%.0f s)\n",
                                             nn::to_string(variant).c_str(), e.epoch, e.train_loss, e.val_loss,
                                             e.val_accuracy, seconds_since(t0));
                            });
    seconds = seconds_since(t0);
    return std::move(result.model);
}

const nn::Model& model3d() {
    auto& c = corpus();
    build_corpus(c);
    if (!c.model3d) c.model3d = train_variant(c, nn::Variant::Cnn3D, c.train_seconds);
    return *c.model3d;
}

void ensure_scores3d(Corpus& c) {
    const auto& model = model3d();
    if (!c.scores3d.empty()) return;
    const auto t0 = Clock::now();
    c.scores3d.clear();
    for (const auto& fc : c.cases) c.scores3d.push_back(score_case(model, fc, c.cfg));
    c.score_seconds = seconds_since(t0);
}

std::size_t leak_count(const std::vector<FeatureCube>& cubes) {
    return static_cast<std::size_t>(std::count_if(cubes.begin(), cubes.end(), [](const auto& x) {
        return x.label == CubeLabel::Leak;
    }));
}

Outcome criterion_end_to_end() {
    Outcome out;
    const auto t0 = Clock::now();
    auto& c = corpus();
    ensure_scores3d(c);
    const double total = seconds_since(t0);

    out.note("11 cases x " + fmt("%.0f", c.cfg.simulation.duration) + " s; " + std::to_string(c.training.size()) +
             " training cubes (" + std::to_string(leak_count(c.training)) + " leak); " +
             std::to_string(c.cfg.train.epochs) + " epochs at batch " + std::to_string(c.cfg.train.batch_size));
    out.note("simulate+featurize " + fmt("%.0f s", c.build_seconds) + ", train " + fmt("%.0f s", c.train_seconds) +
             ", score " + fmt("%.0f s", c.score_seconds));

    RateCounts excessive, noleak;
    bool locations_ok = true;
    std::optional<LeakFinding> smallest;
    double smallest_ratio = 1.0;
    for (std::size_t i = 0; i < c.cases.size(); ++i) {
        const auto& fc = c.cases[i];
        const auto ev = evaluate_scores(fc.case_id, fc.truth, c.scores3d[i], fc.grid.channels, fc.grid.channel_spacing,
                                        c.cfg);
        const auto level = fc.truth.spec.level();
        if (level == LeakLevel::Excessive) excessive += ev.test_counts;
        if (level == LeakLevel::NoLeak) noleak += ev.test_counts;
        const auto& f = ev.metrics.finding;
        std::string line = fc.case_id + " " + std::string(to_string(level)) + ": TPR " + pct(ev.metrics.tpr) +
                           " FAR " + pct(ev.metrics.far) + (f.declared ? " declared at " + fmt("%.2f m", f.center) : " not declared");
        if (ev.metrics.location_error) {
            line += " (error " + fmt("%.2f m", *ev.metrics.location_error) + ")";
            locations_ok = locations_ok && *ev.metrics.location_error <= 3.0;
        }
        if (ev.profile.clamped) line += " [median over all " + std::to_string(ev.profile.windows_used) + " windows]";
        out.note(line);
        if (fc.truth.spec.leak && fc.truth.spec.flow.leak_ratio() < smallest_ratio) {
            smallest_ratio = fc.truth.spec.flow.leak_ratio();
            smallest = f;
        }
    }
    out.check(excessive.tpr().value_or(0) >= 0.85, "excessive-leak TPR " + pct(excessive.tpr()) + " (>= 85%)");
    out.check(noleak.far().value_or(1) <= 0.03, "no-leak FAR " + pct(noleak.far()) + " (<= 3%)");
    out.check(locations_ok, "location error <= 3 m for every declared leak case");
    out.check(smallest && smallest->declared,
              "smallest leak (" + fmt("%.1f%%", 100 * smallest_ratio) + ") declared by the median profile");
    out.check(total <= 1800, "runtime " + fmt("%.0f s", total) + " (<= 1800 s)");
    return out;
}

Outcome criterion_3d_vs_2d() {
    Outcome out;
    auto& c = corpus();
    ensure_scores3d(c);
    double seconds2d = 0;
    if (!c.model2d) c.model2d = train_variant(c, nn::Variant::Cnn2D, seconds2d);

    // test-split probabilities: leak cubes from every leak case, non-leak cubes from leak-free cases
    std::vector<double> leak3, leak2, clean3, clean2;
    for (std::size_t i = 0; i < c.cases.size(); ++i) {
        const auto& fc = c.cases[i];
        const auto scores2d = score_case(*c.model2d, fc, c.cfg);
        const bool leak_free = !fc.truth.spec.leak;
        for (std::size_t k = 0; k < scores2d.size(); ++k) {
            const auto& s3 = c.scores3d[i][k];
            if (!is_test_window(fc.case_id, s3.window, c.cfg.split)) continue;
            if (s3.label == CubeLabel::Leak) {
                leak3.push_back(s3.probability);
                leak2.push_back(scores2d[k].probability);
            } else if (leak_free) {
                clean3.push_back(s3.probability);
                clean2.push_back(scores2d[k].probability);
            }
        }
    }
    auto rate = [](const std::vector<double>& p, double thr) {
        return double(std::count_if(p.begin(), p.end(), [&](double v) { return v > thr; })) / double(p.size());
    };
    const double thr2 = c.cfg.detect.threshold;
    const double far2 = rate(clean2, thr2);
    const double tpr2 = rate(leak2, thr2);
    // smallest 3D threshold whose FAR does not exceed the 2D FAR
    std::vector<double> candidates = clean3;
    candidates.push_back(0.0);
    std::sort(candidates.begin(), candidates.end());
    double thr3 = 1.0;
    for (double t : candidates)
        if (rate(clean3, t) <= far2) {
            thr3 = t;
            break;
        }
    const double far3 = rate(clean3, thr3);
    const double tpr3 = rate(leak3, thr3);
    out.note(std::to_string(leak3.size()) + " leak and " + std::to_string(clean3.size()) + " leak-free test cubes");
    out.note("2D at threshold " + fmt("%.3f", thr2) + ": TPR " + pct(tpr2) + ", FAR " + pct(far2));
    out.note("3D at threshold " + fmt("%.6f", thr3) + ": TPR " + pct(tpr3) + ", FAR " + pct(far3));
    out.note("3D at threshold " + fmt("%.3f", thr2) + ": TPR " + pct(rate(leak3, thr2)) + ", FAR " + pct(rate(clean3, thr2)));
    out.check(tpr3 >= tpr2, "3D TPR >= 2D TPR at equal FAR");
    return out;
}

Outcome criterion_transients() {
    Outcome out;
    auto& c = corpus();
    const auto& model = model3d();
    auto spec = reference_cases(c.cfg.simulation.duration, c.cfg.simulation.seed)[10];   // 1.8 L/s, no leak
    spec.case_id = "transients";
    spec.seed = derive_seed(c.cfg.simulation.seed, 777);
    const double sites[] = {5.6, 12.8, 20.0, 28.0, 36.0};
    const double starts[] = {11.0, 36.5, 62.0, 86.5, 101.0};
    const double noise = flow_noise_rms(c.cfg.signal, spec.flow.pipe_flow_rate, PositionTag::StraightPipe);
    for (int i = 0; i < 5; ++i) spec.transients.push_back({sites[i], starts[i], 2.0, 5.0 * noise, derive_seed(spec.seed, i)});
    const auto rec = simulate_case(spec, c.cfg.das, c.cfg.pipe, c.cfg.signal);
    const auto fc = featurize(rec, c.cfg);
    const auto scores = score_case(model, fc, c.cfg);
    const auto ev = evaluate_scores(fc.case_id, fc.truth, scores, fc.grid.channels, fc.grid.channel_spacing, c.cfg);

    std::size_t window_hits = 0;
    for (int i = 0; i < 5; ++i) {
        const auto ch = c.cfg.das.nearest_channel(sites[i]);
        const auto w = static_cast<std::size_t>(starts[i] / c.cfg.features.segment_length);
        std::size_t hits = 0;
        for (const auto& s : scores)
            if ((s.window == w || s.window == w + 1) && s.channel + 2 >= ch && s.channel <= ch + 2 &&
                s.probability > c.cfg.detect.threshold)
                ++hits;
        window_hits += hits;
        double peak = 0;
        for (const auto& s : scores)
            if (s.window == w && s.channel == ch) peak = s.probability;
        out.note("burst at " + fmt("%.1f m", sites[i]) + ", " + fmt("%.1f s", starts[i]) + ": " +
                 std::to_string(hits) + " per-window detections nearby, p at site " + fmt("%.3f", peak));
    }
    out.note("per-window detections near bursts: " + std::to_string(window_hits));
    bool at_site = false;
    const auto& f = ev.metrics.finding;
    if (f.declared)
        for (double s : sites) at_site = at_site || (s >= f.range_start - 1.0 && s <= f.range_end + 1.0);
    out.note(f.declared ? "median profile declares " + fmt("%.2f", f.range_start) + "-" + fmt("%.2f m", f.range_end)
                        : "median profile declares nothing");
    out.check(!at_site, "no leak declared at any transient site");
    return out;
}

std::vector<FeaturizedCase> featurize_cases(const std::vector<CaseSpec>& specs, const ExperimentConfig& cfg) {
    std::vector<FeaturizedCase> out;
    for (const auto& s : specs) out.push_back(featurize(simulate_case(s, cfg.das, cfg.pipe, cfg.signal), cfg));
    return out;
}

ProbabilityMap map_for(const nn::Model& model, const FeaturizedCase& fc, const ExperimentConfig& cfg) {
    const auto scores = score_case(model, fc, cfg);
    return evaluate_scores(fc.case_id, fc.truth, scores, fc.grid.channels, fc.grid.channel_spacing, cfg).map;
}

Outcome criterion_quantification() {
    Outcome out;
    auto& c = corpus();
    const auto& model = model3d();
    const auto t0 = Clock::now();

    // fit on the reference leak cases, test on a randomized sweep
    ensure_scores3d(c);
    std::vector<RangeSample> samples;
    for (std::size_t i = 0; i < c.cases.size(); ++i) {
        const auto& fc = c.cases[i];
        if (!fc.truth.spec.leak) continue;
        const auto map = evaluate_scores(fc.case_id, fc.truth, c.scores3d[i], fc.grid.channels, fc.grid.channel_spacing,
                                         c.cfg).map;
        samples.push_back({mean_affected_range(map, c.cfg.quantify.averaging_time, c.cfg.detect.threshold),
                           fc.truth.spec.reynolds_ratio(c.cfg.pipe), fc.case_id});
        out.note(fc.case_id + ": Re ratio " + fmt("%.3f", samples.back().re_ratio) + ", mean affected range " +
                 fmt("%.2f m", samples.back().affected_range));
    }
    SweepSettings test_settings;   // 60 cases
    std::optional<RangeModel> fit;
    try {
        fit = fit_range_model(samples);
    } catch (const DomainError& e) {
        out.check(false, std::string("range model fit failed: ") + e.what());
        return out;
    }
    out.note("fit on " + std::to_string(samples.size()) + " reference leak cases: range = " + fmt("%.4f", fit->a) + " * Re_ratio + " +
             fmt("%.4f", fit->b));
    out.check(fit->r_squared >= 0.99, "R^2 " + fmt("%.5f", fit->r_squared) + " (>= 0.99)");

    std::vector<std::pair<LeakLevel, LeakLevel>> outcomes;
    std::size_t correct = 0;
    double worst_inversion = 0;
    const auto test_cases = sweep_cases(test_settings, c.cfg.pipe);
    for (const auto& fc : featurize_cases(test_cases, c.cfg)) {
        const auto map = map_for(model, fc, c.cfg);
        const double range = mean_affected_range(map, c.cfg.quantify.averaging_time, c.cfg.detect.threshold);
        const auto inputs = hydraulic_inputs(fc.truth, c.cfg);
        const auto q = quantify(range, *fit, c.cfg.pipe, inputs);
        outcomes.emplace_back(fc.truth.spec.level(), q.level);
        correct += q.level == fc.truth.spec.level();

        // noiseless inversion: feed the exact range the model predicts for the true Reynolds ratio
        const double exact = fit->a * fc.truth.spec.reynolds_ratio(c.cfg.pipe) + fit->b;
        const auto inv = quantify(exact, *fit, c.cfg.pipe, inputs);
        worst_inversion = std::max(worst_inversion, std::abs(inv.orifice_diameter / fc.truth.spec.leak->orifice_diameter - 1));
    }
    const auto table = truth_table(outcomes);
    const char* names[] = {"small", "significant", "excessive"};
    for (std::size_t r = 0; r < 3; ++r) {
        std::string row = std::string(names[r]) + ":";
        for (std::size_t k = 0; k < 3; ++k) row += " " + std::to_string(table.counts[r][k]);
        row += " missed " + std::to_string(table.missed[r]) + ", accuracy " + pct(table.accuracy(r));
        out.note(row);
    }
    const double accuracy = double(correct) / double(test_cases.size());
    out.check(accuracy >= 0.85, "three-level accuracy on " + std::to_string(test_cases.size()) + " sweep cases " +
                                    fmt("%.2f%%", 100 * accuracy) + " (>= 85%)");
    out.check(worst_inversion < 1e-6, "noiseless orifice inversion worst relative error " + fmt("%.3e", worst_inversion));
    out.note("runtime " + fmt("%.0f s", seconds_since(t0)));
    return out;
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& bytes) {
    std::ofstream(p, std::ios::binary | std::ios::trunc) << bytes;
}

std::map<std::string, std::string> output_digests(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() != "run_manifest.json")
            out[fs::relative(e.path(), dir).string()] = sha256_file(e.path());
    return out;
}

void tiny_pipeline(const fs::path& root, const ExperimentConfig& cfg) {
    cmd_simulate({cfg, root / "sim", false});
    cmd_featurize({cfg, root / "cubes", false}, root / "sim");
    cmd_train({cfg, root / "model", false}, {root / "cubes"});
    cmd_evaluate({cfg, root / "eval", false}, root / "model" / "model.dasm", {root / "cubes"});
    io::write_text_file(root / "range_model.json", RangeModel{1.0, 0.5, 1.0, {}}.to_json());
    cmd_quantify({cfg, root / "quant", false}, {root / "eval"}, {}, root / "range_model.json");
}

template <typename F>
bool rejects(F&& f) {
    try {
        f();
    } catch (const FormatError&) {
        return true;
    } catch (...) {
        return false;
    }
    return false;
}

Outcome criterion_determinism() {
    Outcome out;
    const auto root = fs::temp_directory_path() / ("dasleak-accept-" + std::to_string(::getpid()));
    fs::remove_all(root);
    auto cfg = ExperimentConfig::parse("[simulation]\nduration = 30\ncases = 1,10\n[train]\nepochs = 2\nbatch_size = 32\n");
    tiny_pipeline(root / "a", cfg);
    tiny_pipeline(root / "b", cfg);
    const auto a = output_digests(root / "a");
    const auto b = output_digests(root / "b");
    for (const auto& [name, digest] : a)
        if (!b.count(name) || b.at(name) != digest) out.note("differs: " + name);
    out.check(a == b && a.size() > 20, "two fixed-seed pipeline runs: " + std::to_string(a.size()) + " files, all digests equal");
    out.check(slurp(root / "a/model/model.dasm") == slurp(root / "b/model/model.dasm"), "checkpoints byte-identical");

    // round trips
    const auto rec = read_recording(root / "a/sim/case01.dasr");
    write_recording(rec, root / "rt.dasr");
    out.check(slurp(root / "rt.dasr") == slurp(root / "a/sim/case01.dasr"), "recording re-written bit-exactly");
    write_cube_file(root / "rt.cubes", read_cube_file(root / "a/cubes/case01.cubes"));
    out.check(slurp(root / "rt.cubes") == slurp(root / "a/cubes/case01.cubes"), "cube file re-written bit-exactly");
    nn::save_checkpoint(nn::load_checkpoint(root / "a/model/model.dasm"), root / "rt.dasm");
    out.check(slurp(root / "rt.dasm") == slurp(root / "a/model/model.dasm"), "checkpoint re-written bit-exactly");

    // damage
    const std::pair<fs::path, std::function<void(const fs::path&)>> readers[] = {
        {root / "rt.dasr", [](const fs::path& p) { read_recording(p); }},
        {root / "rt.cubes", [](const fs::path& p) { read_cube_file(p); }},
        {root / "rt.dasm", [](const fs::path& p) { nn::load_checkpoint(p); }},
    };
    for (const auto& [path, read] : readers) {
        const auto bytes = slurp(path);
        spit(path, bytes.substr(0, bytes.size() / 2));
        const bool truncated = rejects([&] { read(path); });
        auto bad = bytes;
        bad[1] ^= 0x20;
        spit(path, bad);
        const bool corrupted = rejects([&] { read(path); });
        spit(path, bytes);
        out.check(truncated && corrupted, path.extension().string() + " truncation and magic corruption rejected");
    }
    fs::remove_all(root);
    return out;
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"Reynolds table reproduction", criterion_reynolds},
        {"feature geometry and shape trace", criterion_geometry},
        {"gradient oracle", criterion_gradients},
        {"STFT oracle", criterion_stft},
        {"desk-scale end-to-end detection", criterion_end_to_end},
        {"3D vs 2D at equal FAR", criterion_3d_vs_2d},
        {"transient rejection", criterion_transients},
        {"quantification", criterion_quantification},
        {"determinism and round-trips", criterion_determinism},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i + 1);
        if (!selected.empty() && !selected.count(n)) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.check(false, std::string("exception: ") + e.what());
        }
        failures += !o.pass;
        std::printf("criterion %d %s  %s (%.1f s)\n", n, o.pass ? "PASS" : "FAIL", criteria[i].first, seconds_since(t0));
        for (const auto& d : o.details) std::printf("    %s\n", d.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
