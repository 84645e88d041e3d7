#include "dasleak/config.hpp"
#include "dasleak/error.hpp"
#include "dasleak/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace dasleak;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;
constexpr int kExitNumerical = 4;

struct CommonFlags {
    std::optional<fs::path> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    fs::path out;
    bool force = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_out = true) {
    cmd->add_option("--config", f.config, "INI configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "override the command's seed");
    cmd->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
    if (needs_out) {
        cmd->add_option("--out", f.out, "output directory")->required();
        cmd->add_flag("--force", f.force, "overwrite a non-empty output directory");
    }
}

ExperimentConfig load_config(const CommonFlags& f) {
    auto cfg = f.config ? ExperimentConfig::load(*f.config) : ExperimentConfig{};
    if (f.threads) cfg.threads = *f.threads;
    return cfg;
}

void report(const RunManifest& run) {
    std::cout << run.command << ": wrote " << run.outputs.size() << " files in " << run.wall_seconds << " s\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pipeline leak detection from distributed acoustic sensing data"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    CommonFlags common;

    auto* sim = app.add_subcommand("simulate", "synthesize the testbed recordings");
    add_common(sim, common);
    std::vector<std::size_t> cases;
    std::optional<double> duration;
    std::size_t sweep = 0;
    sim->add_option("--cases", cases, "table rows to simulate (1-11)")->delimiter(',');
    sim->add_option("--duration", duration, "seconds per case");
    sim->add_option("--sweep", sweep, "simulate N randomized leak cases instead of the table");

    auto* feat = app.add_subcommand("featurize", "turn recordings into labelled feature cubes");
    add_common(feat, common);
    fs::path dataset;
    std::optional<std::size_t> depth;
    feat->add_option("dataset", dataset, "simulate output directory")->required()->check(CLI::ExistingDirectory);
    feat->add_option("--depth,-Z", depth, "channels per cube (odd)");

    auto* tr = app.add_subcommand("train", "train a classifier on featurized cases");
    add_common(tr, common);
    std::vector<fs::path> cube_dirs;
    std::optional<std::string> variant;
    std::optional<std::size_t> epochs;
    tr->add_option("cubes", cube_dirs, "featurize output directories")->required()->check(CLI::ExistingDirectory);
    tr->add_option("--variant", variant, "2d or 3d")->check(CLI::IsMember({"2d", "3d"}));
    tr->add_option("--depth,-Z", depth, "channels per cube (odd)");
    tr->add_option("--epochs", epochs, "maximum epochs");

    auto* ev = app.add_subcommand("evaluate", "score cubes and locate leaks");
    add_common(ev, common);
    fs::path checkpoint;
    ev->add_option("--checkpoint", checkpoint, "trained model")->required()->check(CLI::ExistingFile);
    ev->add_option("cubes", cube_dirs, "featurize output directories")->required()->check(CLI::ExistingDirectory);

    auto* qu = app.add_subcommand("quantify", "estimate leak sizes from probability maps");
    add_common(qu, common);
    std::vector<fs::path> eval_dirs, fit_dirs;
    std::optional<fs::path> range_model;
    qu->add_option("evaluations", eval_dirs, "evaluate output directories")->required()->check(CLI::ExistingDirectory);
    qu->add_option("--fit", fit_dirs, "evaluate output directories used to fit the range model")
        ->check(CLI::ExistingDirectory);
    qu->add_option("--range-model", range_model, "previously fitted range_model.json")->check(CLI::ExistingFile);

    auto* conf = app.add_subcommand("config", "inspect configuration");
    CommonFlags conf_flags;
    add_common(conf, conf_flags, false);
    bool print_defaults = false;
    conf->add_flag("--print-defaults", print_defaults, "print every key with its default");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (conf->parsed()) {
            const auto cfg = print_defaults ? ExperimentConfig{} : load_config(conf_flags);
            cfg.validate();
            std::cout << cfg.to_ini();
            return 0;
        }

        auto cfg = load_config(common);
        if (sim->parsed()) {
            if (!cases.empty()) cfg.simulation.cases = cases;
            if (duration) cfg.simulation.duration = *duration;
            if (common.seed) cfg.simulation.seed = *common.seed;
        }
        if (depth) cfg.model.cube_depth = *depth;
        if (tr->parsed()) {
            if (variant) cfg.model.variant = *variant == "2d" ? nn::Variant::Cnn2D : nn::Variant::Cnn3D;
            if (epochs) cfg.train.epochs = *epochs;
            if (common.seed) cfg.model.train_seed = *common.seed;
        }
        if (ev->parsed() && common.seed) cfg.split.seed = *common.seed;

        const CommandContext ctx{cfg, common.out, common.force};
        if (sim->parsed()) report(cmd_simulate(ctx, sweep));
        else if (feat->parsed()) report(cmd_featurize(ctx, dataset));
        else if (tr->parsed()) report(cmd_train(ctx, cube_dirs));
        else if (ev->parsed()) report(cmd_evaluate(ctx, checkpoint, cube_dirs));
        else if (qu->parsed()) report(cmd_quantify(ctx, eval_dirs, fit_dirs, range_model));
        return 0;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitFormat;
    }
}
