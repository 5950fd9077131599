#include "cgusum/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

namespace cgusum {

void ModelConfig::validate() const {
    if (src_vocab_size < Vocab::kNumReserved || tgt_vocab_size < Vocab::kNumReserved)
        throw ConfigError("vocabulary sizes must cover the reserved block");
    if (emb_dim < 1 || hidden < 1) throw ConfigError("emb_dim and hidden must be >= 1");
    if (d_b < 0) throw ConfigError("d_b must be >= 0 (0 selects d_h / 2)");
    if (max_src_len < 1 || max_tgt_len < 1) throw ConfigError("length limits must be >= 1");
    tokenizer_mode_from_string(tokenizer);
}

void ParamStore::add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name " + name);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, std::move(t));
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter " + name);
    return entries_[it->second].second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter " + name);
    return entries_[it->second].second;
}

namespace {

// Every learnable tensor with its shape, in registration order. Weights are
// drawn uniform(-0.1, 0.1); biases (names ending in ".b" or "_b") start at
// zero.
std::vector<std::pair<std::string, Shape>> parameter_plan(const ModelConfig& c) {
    const int64_t dh = c.d_h();
    const int64_t db = c.branch_width();
    return {
        {"src_embed.w", {c.src_vocab_size, c.emb_dim}},
        {"enc.fwd.w_x", {4 * c.hidden, c.emb_dim}},
        {"enc.fwd.w_h", {4 * c.hidden, c.hidden}},
        {"enc.fwd.b", {4 * c.hidden}},
        {"enc.bwd.w_x", {4 * c.hidden, c.emb_dim}},
        {"enc.bwd.w_h", {4 * c.hidden, c.hidden}},
        {"enc.bwd.b", {4 * c.hidden}},
        {"dec_init.h.w", {c.hidden, dh}},
        {"dec_init.h.b", {c.hidden}},
        {"dec_init.c.w", {c.hidden, dh}},
        {"dec_init.c.b", {c.hidden}},
        {"cgu.branch1.w", {1, dh, db}},
        {"cgu.branch1.b", {db}},
        {"cgu.branch2.w", {3, dh, db}},
        {"cgu.branch2.b", {db}},
        {"cgu.branch3a.w", {3, dh, db}},
        {"cgu.branch3a.b", {db}},
        {"cgu.branch3b.w", {3, db, db}},
        {"cgu.branch3b.b", {db}},
        {"cgu.merge.w", {1, 3 * db, dh}},
        {"cgu.merge.b", {dh}},
        {"cgu.w_att", {dh, dh}},
        {"tgt_embed.w", {c.tgt_vocab_size, c.emb_dim}},
        {"dec.w_x", {4 * c.hidden, c.emb_dim}},
        {"dec.w_h", {4 * c.hidden, c.hidden}},
        {"dec.b", {4 * c.hidden}},
        {"att.w_a", {c.hidden, dh}},
        {"out.w", {c.tgt_vocab_size, dh + c.hidden}},
        {"out.b", {c.tgt_vocab_size}},
    };
}

bool is_bias_name(const std::string& name) {
    return name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0;
}

}  // namespace

Model Model::init(const ModelConfig& cfg, Dtype dt) {
    cfg.validate();
    Model m;
    m.cfg_ = cfg;
    m.dtype_ = dt;
    Rng rng(cfg.seed);
    for (const auto& [name, shape] : parameter_plan(cfg)) {
        if (is_bias_name(name)) {
            m.params_.add(name, Tensor::zeros(shape, dt));
        } else {
            m.params_.add(name, Tensor::uniform(shape, dt, rng, -0.1, 0.1));
        }
    }
    return m;
}

Model Model::from_params(const ModelConfig& cfg, ParamStore params) {
    cfg.validate();
    Model m;
    m.cfg_ = cfg;
    m.params_ = std::move(params);
    const auto plan = parameter_plan(cfg);
    if (m.params_.size() != plan.size())
        throw FormatError("checkpoint holds " + std::to_string(m.params_.size()) +
                              " model tensors, expected " + std::to_string(plan.size()),
                          0);
    for (const auto& [name, shape] : plan) {
        if (!m.params_.contains(name)) throw ConfigError("checkpoint missing parameter " + name);
        const Tensor& t = m.params_.at(name);
        if (t.shape() != shape)
            throw ConfigError("parameter " + name + " has shape " + shape_str(t.shape()) +
                              ", expected " + shape_str(shape));
    }
    m.dtype_ = m.params_.at("src_embed.w").dtype();
    return m;
}

BoundModel Model::bind(Graph& g) const {
    BoundModel bm;
    bm.g = &g;
    for (const auto& [name, tensor] : params_.entries()) bm.vars.emplace(name, g.input(tensor));
    auto v = [&](const char* name) { return bm.vars.at(name); };
    bm.encoder = BiLstmVars{v("src_embed.w"),
                            LstmVars{v("enc.fwd.w_x"), v("enc.fwd.w_h"), v("enc.fwd.b")},
                            LstmVars{v("enc.bwd.w_x"), v("enc.bwd.w_h"), v("enc.bwd.b")}};
    bm.cgu = CguVars{ConvVars{v("cgu.branch1.w"), v("cgu.branch1.b")},
                     ConvVars{v("cgu.branch2.w"), v("cgu.branch2.b")},
                     ConvVars{v("cgu.branch3a.w"), v("cgu.branch3a.b")},
                     ConvVars{v("cgu.branch3b.w"), v("cgu.branch3b.b")},
                     ConvVars{v("cgu.merge.w"), v("cgu.merge.b")},
                     v("cgu.w_att")};
    bm.decoder = DecoderVars{v("tgt_embed.w"), LstmVars{v("dec.w_x"), v("dec.w_h"), v("dec.b")},
                             v("att.w_a"), v("out.w"), v("out.b")};
    bm.dec_init_h_w = v("dec_init.h.w");
    bm.dec_init_h_b = v("dec_init.h.b");
    bm.dec_init_c_w = v("dec_init.c.w");
    bm.dec_init_c_b = v("dec_init.c.b");
    return bm;
}

EncoderStates Model::encode(BoundModel& bm, const std::vector<int>& src_ids) const {
    if (static_cast<int64_t>(src_ids.size()) > cfg_.max_src_len)
        throw InputError("source length " + std::to_string(src_ids.size()) + " exceeds limit " +
                         std::to_string(cfg_.max_src_len));
    EncoderStates enc = bilstm_encode(*bm.g, bm.encoder, src_ids);
    return cgu_apply(enc, bm.cgu, !cfg_.cgu_enabled);
}

LstmState Model::initial_decoder_state(BoundModel& bm, const EncoderStates& enc) const {
    Var h_cat = concat({enc.fwd_final.h, enc.bwd_final.h});
    Var c_cat = concat({enc.fwd_final.c, enc.bwd_final.c});
    Var s0 = tanh_op(add(matvec(bm.dec_init_h_w, h_cat), bm.dec_init_h_b));
    Var c0 = tanh_op(add(matvec(bm.dec_init_c_w, c_cat), bm.dec_init_c_b));
    return LstmState{s0, c0};
}

DecodeStep Model::step(BoundModel& bm, int y_prev, const LstmState& state,
                       const EncoderStates& enc) const {
    if (y_prev < 0 || y_prev >= cfg_.tgt_vocab_size)
        throw InputError("decoder input id " + std::to_string(y_prev) + " out of vocabulary");
    return decode_step(y_prev, state, enc, bm.decoder);
}

SequenceLoss Model::sequence_loss(BoundModel& bm, const std::vector<int>& src_ids,
                                  const std::vector<int>& tgt_ids) const {
    if (tgt_ids.size() < 2 || tgt_ids.front() != Vocab::kBos || tgt_ids.back() != Vocab::kEos)
        throw InputError("target sequence must be BOS ... EOS");
    if (static_cast<int64_t>(tgt_ids.size()) > cfg_.max_tgt_len + 2)
        throw InputError("target length " + std::to_string(tgt_ids.size() - 2) + " exceeds limit " +
                         std::to_string(cfg_.max_tgt_len));
    EncoderStates enc = encode(bm, src_ids);
    LstmState state = initial_decoder_state(bm, enc);
    std::vector<Var> step_nlls;
    SequenceLoss out;
    for (size_t t = 1; t < tgt_ids.size(); ++t) {
        DecodeStep step_out = step(bm, tgt_ids[t - 1], state, enc);
        state = step_out.state;
        Var nll = nll_from_logits(step_out.logits, tgt_ids[t]);
        step_nlls.push_back(nll);
        out.step_nll.push_back(nll.value().get(0));
    }
    out.total = step_nlls.size() == 1 ? step_nlls[0] : add_n(step_nlls);
    return out;
}

BatchLoss Model::forward_loss(const Batch& batch) const {
    if (batch.size() == 0) throw InputError("forward_loss: empty batch");
    BatchLoss out;
    std::vector<double> seq_totals;
    for (size_t i = 0; i < batch.size(); ++i) {
        Graph g;
        BoundModel bm = bind(g);
        SequenceLoss sl = sequence_loss(bm, batch.src_seq(i), batch.tgt_seq(i));
        out.per_token_nll.push_back(sl.step_nll);
        double total = 0.0;
        for (double v : sl.step_nll) total += v;
        seq_totals.push_back(total);
    }
    // Canonical ascending-value summation keeps the mean exactly invariant
    // under batch reordering.
    std::sort(seq_totals.begin(), seq_totals.end());
    double acc = 0.0;
    for (double v : seq_totals) acc += v;
    out.loss = acc / static_cast<double>(batch.size());
    return out;
}

std::pair<double, GradMap> Model::seq_loss_gradients(const Batch& batch, size_t i,
                                                     double inv_n) const {
    Graph g;
    BoundModel bm = bind(g);
    SequenceLoss sl = sequence_loss(bm, batch.src_seq(i), batch.tgt_seq(i));
    g.backward(sl.total);
    GradMap grads;
    for (const auto& [name, var] : bm.vars) {
        if (!g.has_grad(var)) continue;
        Tensor gt = g.grad(var);
        gt.scale_(inv_n);
        grads.emplace(name, std::move(gt));
    }
    return {sl.total.value().get(0), std::move(grads)};
}

double Model::loss_and_gradients(const Batch& batch, GradMap& grads, int threads) const {
    if (batch.size() == 0) throw InputError("loss_and_gradients: empty batch");
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    std::vector<std::pair<double, GradMap>> per_seq(batch.size());
    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(batch.size())));
    if (workers == 1) {
        for (size_t i = 0; i < batch.size(); ++i) per_seq[i] = seq_loss_gradients(batch, i, inv_n);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        std::exception_ptr first_error;
        std::mutex err_mu;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    const size_t i = next.fetch_add(1);
                    if (i >= batch.size()) return;
                    try {
                        per_seq[i] = seq_loss_gradients(batch, i, inv_n);
                    } catch (...) {
                        std::lock_guard<std::mutex> lk(err_mu);
                        if (!first_error) first_error = std::current_exception();
                        return;
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }
    // Merge in sequence-index order so results do not depend on worker count.
    double total = 0.0;
    for (size_t i = 0; i < per_seq.size(); ++i) {
        total += per_seq[i].first;
        for (auto& [name, gt] : per_seq[i].second) {
            auto it = grads.find(name);
            if (it == grads.end()) {
                grads.emplace(name, std::move(gt));
            } else {
                it->second.add_(gt);
            }
        }
    }
    // Parameters that never entered any sequence graph get zero gradients.
    for (const auto& [name, tensor] : params_.entries()) {
        if (!grads.count(name)) grads.emplace(name, Tensor::zeros(tensor.shape(), tensor.dtype()));
    }
    return total * inv_n;
}

}  // namespace cgusum
