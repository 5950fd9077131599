#include "cgusum/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace cgusum {

namespace {

constexpr char kMagic[4] = {'C', 'G', 'U', 'S'};
constexpr uint32_t kVersion = 1;

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw InputError("cannot write checkpoint file " + path);
    }
    void bytes(const void* p, size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    void u8(uint8_t v) { bytes(&v, 1); }
    void u32(uint32_t v) {
        uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                        static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
        bytes(b, 4);
    }
    void u64(uint64_t v) {
        u32(static_cast<uint32_t>(v));
        u32(static_cast<uint32_t>(v >> 32));
    }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void close() {
        out_.flush();
        if (!out_) throw InputError("checkpoint write failed");
    }

private:
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw InputError("cannot read checkpoint file " + path);
    }
    uint64_t offset() const { return offset_; }
    void bytes(void* p, size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in_.gcount()) != n)
            throw FormatError("unexpected end of file", offset_ + static_cast<uint64_t>(in_.gcount()));
        offset_ += n;
    }
    uint8_t u8() {
        uint8_t v;
        bytes(&v, 1);
        return v;
    }
    uint32_t u32() {
        uint8_t b[4];
        bytes(b, 4);
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    }
    uint64_t u64() {
        const uint64_t lo = u32();
        return lo | (static_cast<uint64_t>(u32()) << 32);
    }
    std::string str() {
        const uint32_t n = u32();
        std::string s(n, '\0');
        if (n) bytes(s.data(), n);
        return s;
    }
    bool at_eof() {
        in_.peek();
        return in_.eof();
    }

private:
    std::ifstream in_;
    uint64_t offset_ = 0;
};

// Scalars are stored little-endian; encode through integer shifts so the
// layout does not depend on host byte order.
void write_tensor_data(Writer& w, const Tensor& t) {
    if (t.dtype() == Dtype::f32) {
        for (float v : t.data<float>()) {
            const uint32_t bits = std::bit_cast<uint32_t>(v);
            uint8_t b[4] = {static_cast<uint8_t>(bits), static_cast<uint8_t>(bits >> 8),
                            static_cast<uint8_t>(bits >> 16), static_cast<uint8_t>(bits >> 24)};
            w.bytes(b, 4);
        }
    } else {
        for (double v : t.data<double>()) {
            const uint64_t bits = std::bit_cast<uint64_t>(v);
            uint8_t b[8];
            for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(bits >> (8 * i));
            w.bytes(b, 8);
        }
    }
}

Tensor read_tensor_data(Reader& r, Shape shape, Dtype dt) {
    Tensor t = Tensor::zeros(std::move(shape), dt);
    if (dt == Dtype::f32) {
        for (float& v : t.data<float>()) {
            uint8_t b[4];
            r.bytes(b, 4);
            const uint32_t bits = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
                                  (static_cast<uint32_t>(b[2]) << 16) |
                                  (static_cast<uint32_t>(b[3]) << 24);
            v = std::bit_cast<float>(bits);
        }
    } else {
        for (double& v : t.data<double>()) {
            uint8_t b[8];
            r.bytes(b, 8);
            uint64_t bits = 0;
            for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
            v = std::bit_cast<double>(bits);
        }
    }
    return t;
}

nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"src_vocab_size", c.src_vocab_size},
            {"tgt_vocab_size", c.tgt_vocab_size},
            {"emb_dim", c.emb_dim},
            {"hidden", c.hidden},
            {"cgu_enabled", c.cgu_enabled},
            {"d_b", c.d_b},
            {"seed", c.seed},
            {"max_src_len", c.max_src_len},
            {"max_tgt_len", c.max_tgt_len},
            {"tokenizer", c.tokenizer}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.src_vocab_size = j.at("src_vocab_size").get<int64_t>();
    c.tgt_vocab_size = j.at("tgt_vocab_size").get<int64_t>();
    c.emb_dim = j.at("emb_dim").get<int64_t>();
    c.hidden = j.at("hidden").get<int64_t>();
    c.cgu_enabled = j.at("cgu_enabled").get<bool>();
    c.d_b = j.at("d_b").get<int64_t>();
    c.seed = j.at("seed").get<uint64_t>();
    c.max_src_len = j.at("max_src_len").get<int64_t>();
    c.max_tgt_len = j.at("max_tgt_len").get<int64_t>();
    c.tokenizer = j.at("tokenizer").get<std::string>();
    return c;
}

}  // namespace

Checkpoint Checkpoint::of_model(const Model& m, int64_t epoch, double lr) {
    Checkpoint c;
    c.config = m.config();
    c.tensors = m.params().entries();
    c.epoch = epoch;
    c.lr = lr;
    return c;
}

Model Checkpoint::to_model() const {
    ParamStore store;
    for (const auto& [name, tensor] : tensors) {
        if (name.rfind("adam.", 0) == 0) continue;
        store.add(name, tensor);
    }
    return Model::from_params(config, std::move(store));
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    Writer w(path);
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    nlohmann::json header = {{"model", config_to_json(ckpt.config)},
                             {"epoch", ckpt.epoch},
                             {"lr", ckpt.lr}};
    if (ckpt.optimizer) {
        header["optimizer"] = {{"t", ckpt.optimizer->t},
                               {"beta1", ckpt.optimizer->beta1},
                               {"beta2", ckpt.optimizer->beta2},
                               {"eps", ckpt.optimizer->eps}};
    }
    w.str(header.dump());
    w.u32(static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, tensor] : ckpt.tensors) {
        w.str(name);
        w.u8(static_cast<uint8_t>(tensor.dtype()));
        w.u8(static_cast<uint8_t>(tensor.rank()));
        for (int64_t d : tensor.shape()) w.u32(static_cast<uint32_t>(d));
        write_tensor_data(w, tensor);
    }
    w.close();
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic bytes", 0);
    const uint32_t version = r.u32();
    if (version != kVersion)
        throw FormatError("unsupported version " + std::to_string(version), 4);
    const uint64_t header_at = r.offset();
    const std::string header_raw = r.str();
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_raw);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad JSON header: ") + e.what(), header_at);
    }
    Checkpoint c;
    try {
        c.config = config_from_json(header.at("model"));
        c.epoch = header.at("epoch").get<int64_t>();
        c.lr = header.at("lr").get<double>();
        if (header.contains("optimizer")) {
            AdamSnapshot a;
            a.t = header["optimizer"].at("t").get<int64_t>();
            a.beta1 = header["optimizer"].at("beta1").get<double>();
            a.beta2 = header["optimizer"].at("beta2").get<double>();
            a.eps = header["optimizer"].at("eps").get<double>();
            c.optimizer = a;
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("incomplete header: ") + e.what(), header_at);
    }
    const uint32_t count = r.u32();
    for (uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str();
        const uint8_t dtag = r.u8();
        if (dtag > 1) throw FormatError("bad dtype tag for tensor " + name, r.offset() - 1);
        const Dtype dt = static_cast<Dtype>(dtag);
        const uint8_t rank = r.u8();
        Shape shape;
        for (uint8_t d = 0; d < rank; ++d) shape.push_back(static_cast<int64_t>(r.u32()));
        c.tensors.emplace_back(name, read_tensor_data(r, std::move(shape), dt));
    }
    if (!r.at_eof()) throw FormatError("trailing bytes after tensor section", r.offset());
    return c;
}

}  // namespace cgusum
