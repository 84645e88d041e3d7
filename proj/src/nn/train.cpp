#include "dasleak/nn/train.hpp"

#include "dasleak/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace dasleak::nn {

namespace {

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
};

Evaluation evaluate(const Model& model, std::span<const FeatureCube> cubes, const std::vector<std::size_t>& idx,
                    std::size_t batch_size) {
    double loss = 0.0;
    std::size_t correct = 0;
    std::vector<const FeatureCube*> ptrs;
    for (std::size_t start = 0; start < idx.size(); start += batch_size) {
        ptrs.clear();
        for (std::size_t i = start; i < std::min(idx.size(), start + batch_size); ++i) ptrs.push_back(&cubes[idx[i]]);
        const auto probs = forward(model, make_batch<float>(model.spec, ptrs), Mode::Eval);
        for (std::size_t b = 0; b < ptrs.size(); ++b) {
            const bool leak = ptrs[b]->label == CubeLabel::Leak;
            const double p = std::clamp(static_cast<double>(probs[b * 2 + (leak ? 1 : 0)]), 1e-12, 1.0);
            loss -= std::log(p);
            if ((probs[b * 2 + 1] > probs[b * 2]) == leak) ++correct;
        }
    }
    return {loss / static_cast<double>(idx.size()), static_cast<double>(correct) / static_cast<double>(idx.size())};
}

} // namespace

void TrainConfig::validate() const {
    require(batch_size >= 1, "batch size must be at least 1");
    require(learning_rate >= 0.0 && std::isfinite(learning_rate), "learning rate must be non-negative");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must lie in [0, 1)");
    require(epsilon > 0.0, "Adam epsilon must be positive");
    require(lr_decay > 0.0 && lr_decay <= 1.0, "learning-rate decay must lie in (0, 1]");
    require(l2_penalty >= 0.0, "L2 penalty must be non-negative");
    require(min_delta >= 0.0, "early-stopping min_delta must be non-negative");
    require(validation_fraction >= 0.0 && validation_fraction < 1.0, "validation fraction must lie in [0, 1)");
}

std::string TrainHistory::to_json() const {
    nlohmann::ordered_json j;
    j["best_epoch"] = best_epoch;
    j["stopped_epoch"] = stopped_epoch;
    j["early_stopped"] = early_stopped;
    j["train_count"] = train_count;
    j["validation_count"] = validation_count;
    auto& list = j["epochs"] = nlohmann::ordered_json::array();
    for (const auto& e : epochs) {
        nlohmann::ordered_json row;
        row["epoch"] = e.epoch;
        row["learning_rate"] = e.learning_rate;
        row["train_loss"] = e.train_loss;
        row["val_loss"] = std::isfinite(e.val_loss) ? nlohmann::ordered_json(e.val_loss) : nlohmann::ordered_json();
        row["val_accuracy"] = e.val_accuracy;
        list.push_back(row);
    }
    return j.dump(2) + "\n";
}

TrainResult train(Model model, std::span<const FeatureCube> cubes, const TrainConfig& config, std::uint64_t seed,
                  const EpochCallback& on_epoch) {
    config.validate();
    TrainResult result{std::move(model), {}};
    if (config.epochs == 0) return result;
    require(!cubes.empty(), "training needs at least one cube");

    // Stratified validation carve-out.
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < cubes.size(); ++i) {
        if (cubes[i].label == CubeLabel::Unlabeled) throw DomainError("training cubes must be labelled");
        by_class[cubes[i].label == CubeLabel::Leak ? 1 : 0].push_back(i);
    }
    Rng split_rng(derive_seed(seed, 10));
    std::vector<std::size_t> train_idx, val_idx;
    for (auto& cls : by_class) {
        shuffle(cls, split_rng);
        const auto n_val = static_cast<std::size_t>(std::llround(config.validation_fraction * static_cast<double>(cls.size())));
        val_idx.insert(val_idx.end(), cls.begin(), cls.begin() + static_cast<std::ptrdiff_t>(n_val));
        train_idx.insert(train_idx.end(), cls.begin() + static_cast<std::ptrdiff_t>(n_val), cls.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    require(train_idx.size() >= 2, "training needs at least two cubes outside the validation set");
    result.history.train_count = train_idx.size();
    result.history.validation_count = val_idx.size();

    Model& m = result.model;
    ParameterSet<float> first = ParameterSet<float>::shaped(m.spec), second = ParameterSet<float>::shaped(m.spec);
    std::vector<Tensor<float>*> params, grads_m, grads_v;
    m.params.for_each_trainable([&](const std::string&, Tensor<float>& t) { params.push_back(&t); });
    first.for_each_trainable([&](const std::string&, Tensor<float>& t) { grads_m.push_back(&t); });
    second.for_each_trainable([&](const std::string&, Tensor<float>& t) { grads_v.push_back(&t); });

    ParameterSet<float> best = m.params;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    std::uint64_t step = 0;
    std::vector<const FeatureCube*> ptrs;
    std::vector<std::uint8_t> labels;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = config.learning_rate * std::pow(config.lr_decay, static_cast<double>(epoch));
        Rng order_rng(derive_seed(seed, 11, epoch));
        Rng dropout_rng(derive_seed(seed, 12, epoch));
        std::vector<std::size_t> order = train_idx;
        shuffle(order, order_rng);

        // Batch boundaries; a trailing single cube joins the previous batch (batch norm needs two).
        std::vector<std::size_t> bounds;
        for (std::size_t s = 0; s < order.size(); s += config.batch_size) bounds.push_back(s);
        if (order.size() - bounds.back() < 2 && bounds.size() > 1) bounds.pop_back();
        bounds.push_back(order.size());

        double loss_sum = 0.0;
        for (std::size_t bi = 0; bi + 1 < bounds.size(); ++bi) {
            ptrs.clear();
            labels.clear();
            for (std::size_t i = bounds[bi]; i < bounds[bi + 1]; ++i) {
                ptrs.push_back(&cubes[order[i]]);
                labels.push_back(cubes[order[i]].label == CubeLabel::Leak ? 1 : 0);
            }
            LossResult<float> r;
            try {
                r = loss_and_grads(m, make_batch<float>(m.spec, ptrs), labels, config.l2_penalty, &dropout_rng);
            } catch (const NumericalError& e) {
                throw NumericalError("training diverged at epoch " + std::to_string(epoch + 1) + ", batch " +
                                     std::to_string(bi + 1) + ": " + e.what());
            }
            loss_sum += r.loss * static_cast<double>(ptrs.size());
            update_running_stats(m.params, r.cache);

            ++step;
            const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            std::size_t k = 0;
            r.grads.for_each_trainable([&](const std::string&, Tensor<float>& g) {
                Tensor<float>& p = *params[k];
                Tensor<float>& mt = *grads_m[k];
                Tensor<float>& vt = *grads_v[k];
                ++k;
                for (std::size_t e = 0; e < p.size(); ++e) {
                    const double gd = g[e];
                    const double mn = config.beta1 * mt[e] + (1.0 - config.beta1) * gd;
                    const double vn = config.beta2 * vt[e] + (1.0 - config.beta2) * gd * gd;
                    mt[e] = static_cast<float>(mn);
                    vt[e] = static_cast<float>(vn);
                    p[e] = static_cast<float>(p[e] - lr * (mn / c1) / (std::sqrt(vn / c2) + config.epsilon));
                }
            });
        }

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.learning_rate = lr;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        if (!std::isfinite(rec.train_loss))
            throw NumericalError("training diverged at epoch " + std::to_string(epoch + 1));
        if (!val_idx.empty()) {
            const auto ev = evaluate(m, cubes, val_idx, config.batch_size);
            rec.val_loss = ev.loss;
            rec.val_accuracy = ev.accuracy;
        } else {
            rec.val_loss = std::numeric_limits<double>::quiet_NaN();
        }
        result.history.epochs.push_back(rec);
        result.history.stopped_epoch = rec.epoch;
        if (on_epoch) on_epoch(rec);

        const double monitored = val_idx.empty() ? rec.train_loss : rec.val_loss;
        if (monitored < best_loss - config.min_delta) {
            best_loss = monitored;
            best = m.params;
            result.history.best_epoch = rec.epoch;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            result.history.early_stopped = true;
            break;
        }
    }
    m.params = std::move(best);
    return result;
}

} // namespace dasleak::nn
