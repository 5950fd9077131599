#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cgusum/config.hpp"
#include "cgusum/gradcheck.hpp"
#include "cgusum/inference.hpp"
#include "cgusum/metrics.hpp"

namespace fs = std::filesystem;
using namespace cgusum;

namespace {

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

std::string join_tokens(const std::vector<std::string>& toks, TokenizerMode mode) {
    std::ostringstream os;
    const char* sep = mode == TokenizerMode::whitespace ? " " : "";
    for (size_t i = 0; i < toks.size(); ++i) {
        if (i) os << sep;
        os << toks[i];
    }
    return os.str();
}

int cmd_train(const RunConfig& cfg, const std::string& corpus_path, const std::string& out_dir) {
    const std::vector<ExamplePair> pairs = load_corpus(corpus_path);
    const TokenizerMode mode = cfg.tokenizer_mode();

    std::vector<std::vector<std::string>> src_tokens, tgt_tokens;
    for (const auto& p : pairs) {
        src_tokens.push_back(tokenize(p.source, mode));
        tgt_tokens.push_back(tokenize(p.summary, mode));
    }
    const Vocab src_vocab = Vocab::build(src_tokens, cfg.vocab_cap(true), cfg.min_freq);
    const Vocab tgt_vocab = Vocab::build(tgt_tokens, cfg.vocab_cap(false), cfg.min_freq);

    fs::create_directories(out_dir);
    src_vocab.save(out_dir + "/src.vocab");
    tgt_vocab.save(out_dir + "/tgt.vocab");

    const std::vector<EncodedPair> corpus =
        encode_corpus(pairs, src_vocab, tgt_vocab, mode, cfg.max_src_len, cfg.max_tgt_len);
    const ModelConfig mcfg = cfg.model_config(src_vocab.size(), tgt_vocab.size());
    const TrainConfig tcfg = cfg.train_config();

    train(corpus, mcfg, tcfg, out_dir, [](const EpochStats& s) {
        std::cout << "epoch " << s.epoch << " lr " << s.lr << " loss " << s.train_loss << " ("
                  << s.seconds << " s)\n";
    });
    std::cout << "wrote " << out_dir << "/ckpt_final.cgus\n";
    return 0;
}

int cmd_generate(const std::string& ckpt_path, const std::string& input_path,
                 const std::string& output_path, const std::string& src_vocab_path,
                 const std::string& tgt_vocab_path, int64_t beam, int64_t max_len,
                 bool length_norm) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const Model model = ckpt.to_model();
    const fs::path ckpt_dir = fs::path(ckpt_path).parent_path();
    const std::string src_vp =
        src_vocab_path.empty() ? (ckpt_dir / "src.vocab").string() : src_vocab_path;
    const std::string tgt_vp =
        tgt_vocab_path.empty() ? (ckpt_dir / "tgt.vocab").string() : tgt_vocab_path;
    const Vocab src_vocab = Vocab::load(src_vp);
    const Vocab tgt_vocab = Vocab::load(tgt_vp);
    if (src_vocab.size() != model.config().src_vocab_size ||
        tgt_vocab.size() != model.config().tgt_vocab_size)
        throw ConfigError("vocabulary files do not match the checkpoint (" +
                          std::to_string(src_vocab.size()) + "/" + std::to_string(tgt_vocab.size()) +
                          " vs " + std::to_string(model.config().src_vocab_size) + "/" +
                          std::to_string(model.config().tgt_vocab_size) + ")");

    const TokenizerMode mode = tokenizer_mode_from_string(model.config().tokenizer);
    if (max_len <= 0) max_len = model.config().max_tgt_len;

    std::ofstream out(output_path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + output_path);
    for (const std::string& line : read_lines(input_path)) {
        std::vector<int> src_ids = src_vocab.encode(tokenize(line, mode));
        if (static_cast<int64_t>(src_ids.size()) > model.config().max_src_len)
            src_ids.resize(static_cast<size_t>(model.config().max_src_len));
        if (src_ids.empty()) {
            out << '\n';  // nothing to summarize on a blank line
            continue;
        }
        const std::vector<int> ids = beam == 1 ? greedy_decode(model, src_ids, max_len)
                                               : beam_search(model, src_ids, beam, max_len, length_norm);
        out << join_tokens(tgt_vocab.decode(ids), mode) << '\n';
    }
    return 0;
}

int cmd_score(const std::string& cand_path, const std::string& ref_path, const std::string& out_path,
              const std::string& dup_table_path, const std::string& tok_mode) {
    const std::vector<std::string> cand_lines = read_lines(cand_path);
    const std::vector<std::string> ref_lines = read_lines(ref_path);
    if (cand_lines.size() != ref_lines.size())
        throw InputError("line count mismatch: " + std::to_string(cand_lines.size()) +
                         " candidates vs " + std::to_string(ref_lines.size()) + " references");
    const TokenizerMode mode = tokenizer_mode_from_string(tok_mode);
    std::vector<TokenSeq> cands, refs;
    for (const auto& l : cand_lines) cands.push_back(tokenize(l, mode));
    for (const auto& l : ref_lines) refs.push_back(tokenize(l, mode));

    const CorpusEval ev = corpus_eval(cands, refs);
    const std::string report = ev.to_json();
    std::cout << report << "\n";
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write " + out_path);
        out << report << "\n";
    }
    if (!dup_table_path.empty()) {
        std::ofstream out(dup_table_path, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write " + dup_table_path);
        out << "n,candidate_pct,reference_pct\n";
        for (size_t i = 0; i < 4; ++i)
            out << (i + 1) << "," << ev.candidate_dup.pct[i] << "," << ev.reference_dup.pct[i]
                << "\n";
    }
    return 0;
}

int cmd_gradcheck(const GradCheckOptions& opt) {
    const std::vector<GradCheckEntry> report = model_gradcheck(opt);
    bool ok = true;
    std::string worst;
    for (const auto& e : report) {
        const bool pass = e.max_rel_err < 1e-4;
        if (!pass && ok) worst = e.param;
        ok = ok && pass;
        std::printf("%-16s max_rel_err %.3e %s\n", e.param.c_str(), e.max_rel_err,
                    pass ? "ok" : "FAIL");
    }
    if (!ok) {
        std::cerr << "gradient check failed for parameter " << worst << "\n";
        return 3;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cgusum: attention seq2seq summarizer with a convolutional gated encoder unit"};
    app.require_subcommand(1);

    std::string config_path, corpus_path, out_dir;
    // Flag overrides stage on top of file values, which stage on defaults.
    std::string cgu_flag;
    int64_t seed_flag = -1, epochs_flag = -1, batch_flag = -1, threads_flag = -1;
    double lr_flag = -1.0;

    auto* tr = app.add_subcommand("train", "train a model on a JSON-lines corpus");
    tr->add_option("--config", config_path, "JSON config file");
    tr->add_option("--corpus", corpus_path, "corpus path (JSON lines)")->required();
    tr->add_option("--out", out_dir, "output directory")->required();
    tr->add_option("--seed", seed_flag, "override the seed");
    tr->add_option("--cgu", cgu_flag, "enable the gated unit")->check(CLI::IsMember({"on", "off"}));
    tr->add_option("--epochs", epochs_flag, "override epoch count");
    tr->add_option("--batch-size", batch_flag, "override batch size");
    tr->add_option("--lr", lr_flag, "override the initial learning rate")->check(CLI::NonNegativeNumber);
    tr->add_option("--threads", threads_flag, "worker threads (capped by CGU_NUM_THREADS)");

    std::string ckpt_path, input_path, output_path, src_vocab_path, tgt_vocab_path;
    int64_t beam = 5, max_len = 0;
    std::string length_norm_flag = "on";
    auto* gen = app.add_subcommand("generate", "summarize one input line per output line");
    gen->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    gen->add_option("--input", input_path, "input text, one source per line")->required();
    gen->add_option("--output", output_path, "output path")->required();
    gen->add_option("--src-vocab", src_vocab_path, "source vocab (default: next to checkpoint)");
    gen->add_option("--tgt-vocab", tgt_vocab_path, "target vocab (default: next to checkpoint)");
    gen->add_option("--beam", beam, "beam width (1 = greedy)")->check(CLI::PositiveNumber);
    gen->add_option("--max-len", max_len, "summary length cap (0 = model default)");
    gen->add_option("--length-norm", length_norm_flag, "rank by per-step score")
        ->check(CLI::IsMember({"on", "off"}));

    std::string cand_path, ref_path, report_path, dup_table_path, score_tokenizer = "whitespace";
    auto* sc = app.add_subcommand("score", "ROUGE-1/2/L F1 and duplicate n-gram rates");
    sc->add_option("--candidates", cand_path, "candidate summaries, one per line")->required();
    sc->add_option("--references", ref_path, "reference summaries, one per line")->required();
    sc->add_option("--out", report_path, "also write the JSON report here");
    sc->add_option("--dup-table", dup_table_path, "write duplicate percentages as CSV");
    sc->add_option("--tokenizer", score_tokenizer, "whitespace or char")
        ->check(CLI::IsMember({"whitespace", "char"}));

    GradCheckOptions gopt;
    std::string gradcheck_cgu = "on";
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full model");
    gc->add_option("--hidden", gopt.hidden, "hidden size");
    gc->add_option("--emb", gopt.emb_dim, "embedding size");
    gc->add_option("--vocab", gopt.vocab, "vocabulary size");
    gc->add_option("--src-len", gopt.src_len, "source length");
    gc->add_option("--tgt-len", gopt.tgt_len, "target length");
    gc->add_option("--seed", gopt.seed, "seed");
    gc->add_option("--cgu", gradcheck_cgu, "check with the gated unit enabled")
        ->check(CLI::IsMember({"on", "off"}));
    gc->add_option("--corrupt", gopt.corrupt_param, "test hook: corrupt one analytic gradient");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (tr->parsed()) {
            RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
            if (seed_flag >= 0) cfg.seed = static_cast<uint64_t>(seed_flag);
            if (!cgu_flag.empty()) cfg.cgu = cgu_flag == "on";
            if (epochs_flag > 0) cfg.epochs = epochs_flag;
            if (batch_flag > 0) cfg.batch_size = batch_flag;
            if (lr_flag >= 0) cfg.lr = lr_flag;
            if (threads_flag > 0) cfg.threads = threads_flag;
            cfg.validate();
            return cmd_train(cfg, corpus_path, out_dir);
        }
        if (gen->parsed()) {
            return cmd_generate(ckpt_path, input_path, output_path, src_vocab_path, tgt_vocab_path,
                                beam, max_len, length_norm_flag == "on");
        }
        if (sc->parsed()) {
            return cmd_score(cand_path, ref_path, report_path, dup_table_path, score_tokenizer);
        }
        if (gc->parsed()) {
            gopt.cgu = gradcheck_cgu == "on";
            return cmd_gradcheck(gopt);
        }
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const InputError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const ShapeError& e) {
        std::cerr << e.what() << "\n";
        return 3;
    }
    return 0;
}
