#include "cgusum/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cgusum/rng.hpp"

namespace cgusum {

namespace {

// Loss in the exact form the gradients differentiate: per-sequence totals
// summed in batch order, divided by N.
double plain_loss(const Model& model, const Batch& batch) {
    double total = 0.0;
    for (size_t i = 0; i < batch.size(); ++i) {
        Graph g;
        BoundModel bm = model.bind(g);
        SequenceLoss sl = model.sequence_loss(bm, batch.src_seq(i), batch.tgt_seq(i));
        total += sl.total.value().get(0);
    }
    return total / static_cast<double>(batch.size());
}

}  // namespace

std::vector<GradCheckEntry> model_gradcheck(const GradCheckOptions& opt) {
    if (opt.hidden > 64 || opt.emb_dim > 64 || opt.vocab > 64 || opt.src_len > 64 ||
        opt.tgt_len > 64)
        throw ConfigError("gradcheck dims are capped at 64");
    if (opt.hidden < 1 || opt.emb_dim < 1 || opt.vocab < 5 || opt.src_len < 1 || opt.tgt_len < 1)
        throw ConfigError("gradcheck dims too small");

    ModelConfig cfg;
    cfg.src_vocab_size = opt.vocab;
    cfg.tgt_vocab_size = opt.vocab;
    cfg.emb_dim = opt.emb_dim;
    cfg.hidden = opt.hidden;
    cfg.cgu_enabled = opt.cgu;
    cfg.seed = opt.seed;
    Model model = Model::init(cfg, Dtype::f64);

    Rng rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
    const int content = static_cast<int>(opt.vocab) - Vocab::kNumReserved;
    std::vector<EncodedPair> pairs(1);
    for (int64_t i = 0; i < opt.src_len; ++i)
        pairs[0].src.push_back(Vocab::kNumReserved + static_cast<int>(rng.index(content)));
    for (int64_t i = 0; i < opt.tgt_len; ++i)
        pairs[0].tgt.push_back(Vocab::kNumReserved + static_cast<int>(rng.index(content)));
    const Batch batch = make_batch(pairs, {0});

    GradMap analytic;
    model.loss_and_gradients(batch, analytic);
    if (!opt.corrupt_param.empty()) {
        auto it = analytic.find(opt.corrupt_param);
        if (it == analytic.end())
            throw ConfigError("gradcheck: unknown parameter " + opt.corrupt_param);
        it->second.set(0, it->second.get(0) + 1.0);
    }

    std::vector<GradCheckEntry> report;
    for (auto& [name, tensor] : model.params().entries()) {
        const Tensor& ga = analytic.at(name);
        GradCheckEntry entry{name, 0.0};
        for (int64_t i = 0; i < tensor.numel(); ++i) {
            const double saved = tensor.get(i);
            tensor.set(i, saved + opt.eps);
            const double up = plain_loss(model, batch);
            tensor.set(i, saved - opt.eps);
            const double down = plain_loss(model, batch);
            tensor.set(i, saved);
            const double fd = (up - down) / (2.0 * opt.eps);
            const double a = ga.get(i);
            const double rel = std::abs(a - fd) / std::max(1.0, std::abs(a));
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
        }
        report.push_back(std::move(entry));
    }
    return report;
}

}  // namespace cgusum
