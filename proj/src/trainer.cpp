#include "cgusum/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "json.hpp"

namespace cgusum {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (lr < 0) throw ConfigError("lr must be >= 0");
    if (!(clip_lo < clip_hi)) throw ConfigError("clip range must satisfy lo < hi");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
    if (threads < 1) throw ConfigError("threads must be >= 1");
}

void clip_gradients(GradMap& grads, double lo, double hi) {
    for (auto& [name, g] : grads) {
        with_dtype(g.dtype(), [&, &name = name](auto tag) {
            using T = decltype(tag);
            for (T& x : g.data<T>()) {
                if (std::isnan(static_cast<double>(x)))
                    throw NumericError("NaN gradient for parameter " + name);
                if (x < static_cast<T>(lo)) x = static_cast<T>(lo);
                if (x > static_cast<T>(hi)) x = static_cast<T>(hi);
            }
        });
    }
}

void AdamState::step(ParamStore& params, const GradMap& grads, double lr) {
    if (t_ >= (int64_t{1} << 62)) throw ConfigError("adam step counter overflow");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, tensor] : params.entries()) {
        auto git = grads.find(name);
        if (git == grads.end()) throw ConfigError("missing gradient for parameter " + name);
        const Tensor& g = git->second;
        if (g.shape() != tensor.shape())
            throw ShapeError("gradient shape " + shape_str(g.shape()) + " for parameter " + name);
        auto mit = m_.find(name);
        if (mit == m_.end()) {
            mit = m_.emplace(name, Tensor::zeros(tensor.shape(), tensor.dtype())).first;
            v_.emplace(name, Tensor::zeros(tensor.shape(), tensor.dtype()));
        }
        Tensor& m = mit->second;
        Tensor& v = v_.at(name);
        // Per-element math in double regardless of storage dtype.
        for (int64_t i = 0; i < tensor.numel(); ++i) {
            const double gi = g.get(i);
            const double mi = beta1_ * m.get(i) + (1.0 - beta1_) * gi;
            const double vi = beta2_ * v.get(i) + (1.0 - beta2_) * gi * gi;
            m.set(i, mi);
            v.set(i, vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            tensor.set(i, tensor.get(i) - lr * mhat / (std::sqrt(vhat) + eps_));
        }
    }
}

double halve_lr(double lr) {
    if (lr <= 0) throw ConfigError("learning rate must be positive to halve");
    return lr / 2.0;
}

int effective_threads(int requested) {
    const char* cap = std::getenv("CGU_NUM_THREADS");
    if (cap != nullptr) {
        const long v = std::strtol(cap, nullptr, 10);
        if (v >= 1 && v < requested) return static_cast<int>(v);
        if (v >= 1 && requested < 1) return static_cast<int>(v);
    }
    return requested < 1 ? 1 : requested;
}

TrainResult train(const std::vector<EncodedPair>& corpus, const ModelConfig& mcfg,
                  const TrainConfig& tcfg, const std::string& out_dir,
                  const std::function<void(const EpochStats&)>& on_epoch) {
    if (corpus.empty()) throw InputError("train: empty corpus");
    mcfg.validate();
    tcfg.validate();
    const int threads = effective_threads(tcfg.threads);

    Model model = Model::init(mcfg, Dtype::f32);
    AdamState adam(tcfg.beta1, tcfg.beta2, tcfg.eps);
    Rng shuffle_rng(tcfg.seed);

    std::ofstream log_out;
    if (!out_dir.empty()) {
        log_out.open(out_dir + "/train_log.jsonl", std::ios::app);
        if (!log_out) throw InputError("cannot write training log in " + out_dir);
    }

    auto write_ckpt = [&](const std::string& name, int64_t epoch, double lr) {
        if (out_dir.empty()) return;
        Checkpoint c = Checkpoint::of_model(model, epoch, lr);
        AdamSnapshot snap;
        snap.t = adam.step_count();
        snap.beta1 = tcfg.beta1;
        snap.beta2 = tcfg.beta2;
        snap.eps = tcfg.eps;
        c.optimizer = snap;
        for (const auto& [pname, m] : adam.m()) c.tensors.emplace_back("adam.m." + pname, m);
        for (const auto& [pname, v] : adam.v()) c.tensors.emplace_back("adam.v." + pname, v);
        save_checkpoint(out_dir + "/" + name, c);
    };

    TrainResult result;
    double lr = tcfg.lr;
    int64_t total_tokens = 0;
    for (const auto& p : corpus) total_tokens += static_cast<int64_t>(p.tgt.size()) + 1;  // + EOS

    for (int64_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::vector<Batch> batches = make_batches(corpus, tcfg.batch_size, shuffle_rng);
        double epoch_nll = 0.0;
        for (const Batch& batch : batches) {
            GradMap grads;
            const double batch_loss = model.loss_and_gradients(batch, grads, threads);
            epoch_nll += batch_loss * static_cast<double>(batch.size());
            clip_gradients(grads, tcfg.clip_lo, tcfg.clip_hi);
            adam.step(model.params(), grads, lr);
        }
        const auto t1 = std::chrono::steady_clock::now();

        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        stats.train_loss = epoch_nll / static_cast<double>(corpus.size());
        stats.per_token_nll = epoch_nll / static_cast<double>(total_tokens);
        stats.seconds = std::chrono::duration<double>(t1 - t0).count();
        result.log.push_back(stats);
        if (log_out.is_open()) {
            const nlohmann::json line = {{"epoch", stats.epoch},
                                         {"lr", stats.lr},
                                         {"train_loss", stats.train_loss},
                                         {"seconds", stats.seconds}};
            log_out << line.dump() << '\n';
            log_out.flush();
        }
        if (on_epoch) on_epoch(stats);

        if (tcfg.checkpoint_every > 0 && epoch % tcfg.checkpoint_every == 0)
            write_ckpt("ckpt_epoch_" + std::to_string(epoch) + ".cgus", epoch, lr);
        if (lr > 0 && epoch <= tcfg.lr_halve_until_epoch) lr = halve_lr(lr);
    }
    write_ckpt("ckpt_final.cgus", tcfg.epochs, lr);
    result.model = std::move(model);
    result.final_lr = lr;
    return result;
}

}  // namespace cgusum
