#pragma once

#include "dasleak/nn/model.hpp"

#include <functional>
#include <string>
#include <vector>

namespace dasleak::nn {

struct TrainConfig {
    std::size_t batch_size = 128;
    std::size_t epochs = 100;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double lr_decay = 0.96;           // multiplied in once per epoch
    double l2_penalty = 0.003;        // on conv kernels only
    std::size_t patience = 10;        // epochs without validation improvement
    double min_delta = 1e-4;          // smaller drops in the monitored loss do not count
    double validation_fraction = 0.1;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;            // 1-based
    double learning_rate = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;            // cross-entropy only; NaN without a validation set
    double val_accuracy = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;       // 0 when no epoch ran
    std::size_t stopped_epoch = 0;
    bool early_stopped = false;
    std::size_t train_count = 0;
    std::size_t validation_count = 0;

    std::string to_json() const;
};

struct TrainResult {
    Model model;
    TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/**
 * Adam with per-epoch exponential learning-rate decay and early stopping on
 * a stratified validation carve-out; the best-validation parameters are
 * restored at the end. Shuffling, dropout and the split all derive from
 * `seed`, so equal inputs give identical results. Cubes must be labelled.
 * Throws NumericalError naming the epoch and batch on divergence.
 */
TrainResult train(Model model, std::span<const FeatureCube> cubes, const TrainConfig& config, std::uint64_t seed,
                  const EpochCallback& on_epoch = {});

} // namespace dasleak::nn
