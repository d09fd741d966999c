#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "cdl/checkpoint.hpp"
#include "cdl/grad.hpp"
#include "cdl/model.hpp"
#include "cdl/optim.hpp"

// Projected-Adam training on randomly cropped, augmented, renoised patches.
// All randomness is counter-based on (seed, epoch, batch), so a rerun with
// the same seed reproduces the run bit for bit.

namespace cdl {

template <typename T>
struct TrainConfig {
    int batch_size = 10;
    int crop_size = 128;
    T lr = T(1e-3);
    T lr_decay = T(0.95);
    int lr_decay_every = 50;  // epochs
    int max_epochs = 6000;
    T sigma_lo = T(25.0 / 255.0);  // noise range on the [0,1] intensity scale
    T sigma_hi = T(25.0 / 255.0);
    T backtrack_factor = T(0.8);
    int max_backtracks = 3;  // consecutive, without a new validation best
    int checkpoint_every = 10;
    std::string checkpoint_dir;  // empty: restore points stay in memory only
    uint64_t seed = 0;
    T convergence_tol = T(1e-5);
    int convergence_window = 100;
    T divergence_factor = T(5);
    int divergence_history = 100;

    void validate() const {
        if (batch_size < 1) throw contract_error("TrainConfig: batch_size must be >= 1");
        if (crop_size < 1) throw contract_error("TrainConfig: crop_size must be >= 1");
        if (!(lr > T(0))) throw contract_error("TrainConfig: lr must be > 0");
        if (!(lr_decay > T(0)) || lr_decay > T(1))
            throw contract_error("TrainConfig: lr_decay must be in (0, 1]");
        if (lr_decay_every < 1) throw contract_error("TrainConfig: lr_decay_every must be >= 1");
        if (max_epochs < 1) throw contract_error("TrainConfig: max_epochs must be >= 1");
        if (!(sigma_lo > T(0)) || sigma_hi < sigma_lo)
            throw contract_error("TrainConfig: need 0 < sigma_lo <= sigma_hi");
        if (!(backtrack_factor > T(0)) || backtrack_factor >= T(1))
            throw contract_error("TrainConfig: backtrack_factor must be in (0, 1)");
        if (max_backtracks < 1) throw contract_error("TrainConfig: max_backtracks must be >= 1");
        if (checkpoint_every < 1) throw contract_error("TrainConfig: checkpoint_every must be >= 1");
        if (!(convergence_tol > T(0))) throw contract_error("TrainConfig: convergence_tol must be > 0");
        if (convergence_window < 1) throw contract_error("TrainConfig: convergence_window must be >= 1");
        if (!(divergence_factor > T(1))) throw contract_error("TrainConfig: divergence_factor must be > 1");
        if (divergence_history < 1) throw contract_error("TrainConfig: divergence_history must be >= 1");
    }

    T sigma_mid() const { return (sigma_lo + sigma_hi) / T(2); }
};

template <typename T>
struct Sample {
    Image<T> y;  // noisy, mean-subtracted
    Image<T> x;  // clean, same mean subtracted
    T sigma;
};

namespace detail {

template <typename T>
Image<T> rot90(const Image<T>& x) {  // square inputs only; counter-clockwise
    Image<T> out(x.width, x.height);
    for (int r = 0; r < x.height; ++r)
        for (int c = 0; c < x.width; ++c) out(x.width - 1 - c, r) = x(r, c);
    return out;
}

template <typename T>
Image<T> hflip(const Image<T>& x) {
    Image<T> out(x.height, x.width);
    for (int r = 0; r < x.height; ++r)
        for (int c = 0; c < x.width; ++c) out(r, x.width - 1 - c) = x(r, c);
    return out;
}

// Noise the clean patch and subtract the noisy mean from both sides, so the
// model always sees (and is scored against) zero-mean data.
template <typename T>
Sample<T> noise_and_center(Image<T> x, T sigma, Rng& rng) {
    Sample<T> s;
    s.sigma = sigma;
    s.y = x;
    for (T& v : s.y.data) v += sigma * T(rng.normal());
    const T mu = mean_of(s.y);
    for (T& v : s.y.data) v -= mu;
    for (T& v : x.data) v -= mu;
    s.x = std::move(x);
    return s;
}

}  // namespace detail

// One training batch: random crop, random flip/rotation, fresh noise at a
// level drawn from [sigma_lo, sigma_hi]. Deterministic in the seed.
template <typename T>
std::vector<Sample<T>> make_batch(const std::vector<Image<T>>& images, int batch_size,
                                  int crop_size, T sigma_lo, T sigma_hi, uint64_t seed) {
    if (images.empty()) throw contract_error("make_batch: no images");
    Rng rng(seed);
    std::vector<Sample<T>> batch;
    batch.reserve(size_t(batch_size));
    for (int b = 0; b < batch_size; ++b) {
        const Image<T>& src = images[size_t(rng.uniform_int(images.size()))];
        if (src.height < crop_size || src.width < crop_size)
            throw contract_error("make_batch: image smaller than crop size");
        const int r0 = int(rng.uniform_int(uint64_t(src.height - crop_size + 1)));
        const int c0 = int(rng.uniform_int(uint64_t(src.width - crop_size + 1)));
        Image<T> patch(crop_size, crop_size);
        for (int r = 0; r < crop_size; ++r)
            for (int c = 0; c < crop_size; ++c) patch(r, c) = src(r0 + r, c0 + c);
        if (rng.uniform_int(2)) patch = detail::hflip(patch);
        const uint64_t quarter_turns = rng.uniform_int(4);
        for (uint64_t t = 0; t < quarter_turns; ++t) patch = detail::rot90(patch);
        const T sigma = T(rng.uniform(double(sigma_lo), double(sigma_hi)));
        batch.push_back(detail::noise_and_center(std::move(patch), sigma, rng));
    }
    return batch;
}

// Fixed noisy copies of the validation images (full frames, one noise draw
// per image), so validation losses are comparable across epochs.
template <typename T>
std::vector<Sample<T>> make_validation_pairs(const std::vector<Image<T>>& images, T sigma,
                                             uint64_t seed) {
    std::vector<Sample<T>> pairs;
    pairs.reserve(images.size());
    for (size_t i = 0; i < images.size(); ++i) {
        Rng rng(mix_seed(seed, 0x76616cull, i));
        pairs.push_back(detail::noise_and_center(images[i], sigma, rng));
    }
    return pairs;
}

template <typename T>
struct TrainHooks {
    // Runs before each epoch; may mutate the parameters (used to exercise
    // the divergence recovery path).
    std::function<void(int, ModelParams<T>&)> on_epoch_start;
    std::function<void(int, T train_loss, T val_loss, T lr)> on_epoch_end;
};

template <typename T>
struct TrainResult {
    ModelParams<T> best_params;   // lowest validation loss
    ModelParams<T> final_params;  // state at the last epoch
    T best_val_loss = T(0);
    std::vector<T> train_loss;  // mean batch loss per epoch
    std::vector<T> val_loss;    // per epoch
    int epochs = 0;
    int backtracks = 0;
    bool converged_early = false;
    T final_lr = T(0);
};

template <typename T>
TrainResult<T> train(const ModelConfig& mcfg, const TrainConfig<T>& tcfg,
                     const std::vector<Image<T>>& train_set,
                     const std::vector<Image<T>>& val_set, const TrainHooks<T>& hooks = {},
                     const TrainingSnapshot<T>* resume = nullptr) {
    mcfg.validate();
    tcfg.validate();
    if (train_set.empty() || val_set.empty())
        throw contract_error("train: training and validation sets must be non-empty");
    if (tcfg.crop_size % mcfg.stride)
        throw contract_error("train: crop_size must be a multiple of the stride");
    for (const auto& img : train_set)
        if (img.height < tcfg.crop_size || img.width < tcfg.crop_size)
            throw contract_error("train: training image smaller than crop size");
    for (const auto& img : val_set)
        if (img.height % mcfg.stride || img.width % mcfg.stride)
            throw contract_error("train: validation dims must be multiples of the stride");

    int start_epoch = 0;
    ModelParams<T> params;
    OptimizerState<T> opt;
    AdamConfig<T> adam;
    adam.lr = tcfg.lr;
    if (resume) {
        if (!(resume->model_cfg == mcfg))
            throw contract_error("train: resume checkpoint was written for a different model");
        if (resume->epoch >= tcfg.max_epochs)
            throw contract_error("train: resume checkpoint is already past max_epochs");
        params = resume->params;
        opt = resume->opt;
        adam.lr = resume->lr;
        start_epoch = resume->epoch;
    } else {
        params = init_params<T>(mcfg, tcfg.seed, tcfg.sigma_mid());
        opt = OptimizerState<T>::init(params);
    }

    const auto val_pairs = make_validation_pairs(val_set, tcfg.sigma_mid(), tcfg.seed);
    auto validation_loss = [&](const ModelParams<T>& p) {
        double acc = 0.0;
        for (const auto& s : val_pairs)
            acc += double(sample_loss(forward(p, mcfg, s.y, s.sigma), s.x));
        return T(acc / double(val_pairs.size()));
    };

    const int batches_per_epoch =
        int((train_set.size() + size_t(tcfg.batch_size) - 1) / size_t(tcfg.batch_size));

    TrainResult<T> res;
    res.best_val_loss = resume ? resume->best_val_loss : std::numeric_limits<T>::infinity();
    if (resume) res.best_params = params;  // refreshed on any new validation best

    auto snapshot_of = [&](int epoch) {
        TrainingSnapshot<T> snap;
        snap.model_cfg = mcfg;
        snap.params = params;
        snap.opt = opt;
        snap.lr = adam.lr;
        snap.epoch = epoch;
        snap.best_val_loss = res.best_val_loss;
        snap.seed = tcfg.seed;
        return snap;
    };
    TrainingSnapshot<T> restore = snapshot_of(start_epoch);

    std::deque<T> loss_history;
    int consecutive_backtracks = 0;

    for (int epoch = start_epoch; epoch < tcfg.max_epochs; ++epoch) {
        if (hooks.on_epoch_start) hooks.on_epoch_start(epoch, params);

        bool diverged = false;
        double epoch_loss = 0.0;
        int good_batches = 0;
        for (int b = 0; b < batches_per_epoch; ++b) {
            const auto batch =
                make_batch(train_set, tcfg.batch_size, tcfg.crop_size, tcfg.sigma_lo,
                           tcfg.sigma_hi, mix_seed(tcfg.seed, uint64_t(epoch), uint64_t(b)));
            ModelParams<T> grad = zero_like(params);
            double batch_loss = 0.0;
            bool finite = true;
            try {
                for (const auto& s : batch)
                    batch_loss += double(loss_and_gradient(params, mcfg, s.y, s.x, s.sigma, grad));
            } catch (const numeric_error&) {
                finite = false;
            }
            batch_loss /= double(batch.size());

            T median = T(0);
            if (loss_history.size() >= 10) {
                std::vector<T> tmp(loss_history.begin(), loss_history.end());
                std::nth_element(tmp.begin(), tmp.begin() + tmp.size() / 2, tmp.end());
                median = tmp[tmp.size() / 2];
            }
            if (!finite || !std::isfinite(batch_loss) ||
                (loss_history.size() >= 10 &&
                 batch_loss > double(tcfg.divergence_factor) * double(median))) {
                diverged = true;
                break;
            }

            const T scale = T(1) / T(batch.size());
            grad.for_each_array([&](const std::string&, std::vector<T>& v) {
                for (T& g : v) g *= scale;
            });
            adam_step(params, grad, opt, adam);
            project_constraints(params);

            epoch_loss += batch_loss;
            ++good_batches;
            loss_history.push_back(T(batch_loss));
            if (int(loss_history.size()) > tcfg.divergence_history) loss_history.pop_front();
        }

        if (diverged) {
            ++res.backtracks;
            ++consecutive_backtracks;
            const T reduced = adam.lr * tcfg.backtrack_factor;
            params = restore.params;
            opt = restore.opt;
            adam.lr = reduced;
            loss_history.clear();
            if (consecutive_backtracks >= tcfg.max_backtracks) {
                std::string where;
                if (!tcfg.checkpoint_dir.empty()) {
                    where = tcfg.checkpoint_dir + "/diverged.bin";
                    save_checkpoint(where, restore);
                }
                throw numeric_error(
                    "train: diverged " + std::to_string(consecutive_backtracks) +
                    " times in a row without validation progress" +
                    (where.empty() ? "" : "; last good state saved to " + where));
            }
        }

        const T train_loss =
            good_batches ? T(epoch_loss / good_batches)
                         : (res.train_loss.empty() ? T(0) : res.train_loss.back());
        const T vloss = validation_loss(params);
        res.train_loss.push_back(train_loss);
        res.val_loss.push_back(vloss);
        res.epochs = epoch + 1;

        if (vloss < res.best_val_loss) {
            res.best_val_loss = vloss;
            res.best_params = params;
            consecutive_backtracks = 0;
            if (!tcfg.checkpoint_dir.empty())
                save_checkpoint(tcfg.checkpoint_dir + "/best.bin", snapshot_of(epoch));
        }

        if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, train_loss, vloss, adam.lr);

        if (!diverged && (epoch + 1) % tcfg.checkpoint_every == 0) {
            restore = snapshot_of(epoch + 1);
            if (!tcfg.checkpoint_dir.empty())
                save_checkpoint(tcfg.checkpoint_dir + "/latest.bin", restore);
        }

        if ((epoch + 1) % tcfg.lr_decay_every == 0) adam.lr *= tcfg.lr_decay;

        // stop once the best validation loss has stagnated for a full window
        const int w = tcfg.convergence_window;
        if (int(res.val_loss.size()) > w) {
            T past_best = res.val_loss[0];
            for (int i = 0; i + w < int(res.val_loss.size()); ++i)
                past_best = std::min(past_best, res.val_loss[size_t(i)]);
            const T rel = (past_best - res.best_val_loss) / std::max(past_best, T(1e-30));
            if (rel < tcfg.convergence_tol) {
                res.converged_early = true;
                break;
            }
        }
    }

    res.final_params = params;
    res.final_lr = adam.lr;
    if (res.best_val_loss == std::numeric_limits<T>::infinity()) {
        res.best_params = params;
        res.best_val_loss = res.val_loss.empty() ? T(0) : res.val_loss.back();
    }
    return res;
}

}  // namespace cdl
