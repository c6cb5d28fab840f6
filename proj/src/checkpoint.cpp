#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "oled/resnet.hpp"

// Checkpoint container: magic "OLNC", u32 version, u32 config block, u64
// iteration, u64 rng digest, then per-layer shape-prefixed little-endian f32
// arrays (conv W/b in layer order, then BN gamma/beta/run_mean/run_var), and
// a length-prefixed JSON metadata trailer. Parameters are stored as f32
// regardless of the compute scalar; a load is exact for float networks and a
// one-time quantization for double ones.

namespace oled {

namespace {

constexpr char kMagic[4] = {'O', 'L', 'N', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xFF;
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xFF;
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("checkpoint: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw IoError("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void put_f32(std::ostream& os, float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32(os, u);
}

float get_f32(std::istream& is) {
    const std::uint32_t u = get_u32(is);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

template <typename T>
void put_array(std::ostream& os, const std::vector<std::uint32_t>& dims,
               const std::vector<T>& data) {
    put_u32(os, static_cast<std::uint32_t>(dims.size()));
    std::uint64_t count = 1;
    for (std::uint32_t d : dims) {
        put_u32(os, d);
        count *= d;
    }
    if (count != data.size()) throw IoError("checkpoint: array shape mismatch");
    for (const T& v : data) put_f32(os, static_cast<float>(v));
}

template <typename T>
std::vector<T> get_array(std::istream& is, const std::vector<std::uint32_t>& expect) {
    const std::uint32_t nd = get_u32(is);
    if (nd != expect.size()) throw IoError("checkpoint: unexpected array rank");
    std::uint64_t count = 1;
    for (std::uint32_t want : expect) {
        const std::uint32_t d = get_u32(is);
        if (d != want) throw IoError("checkpoint: shape inconsistent with config");
        count *= d;
    }
    std::vector<T> out(count);
    for (auto& v : out) v = static_cast<T>(get_f32(is));
    return out;
}

} // namespace

template <typename T>
void ResNet<T>::save(const std::string& path) const {
    std::ostringstream os(std::ios::binary);
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(cfg_.n_param_layers));
    put_u32(os, static_cast<std::uint32_t>(cfg_.filters));
    put_u32(os, static_cast<std::uint32_t>(cfg_.kernel));
    put_u32(os, static_cast<std::uint32_t>(cfg_.in_channels));
    put_u32(os, static_cast<std::uint32_t>(cfg_.out_channels));
    put_u64(os, static_cast<std::uint64_t>(iteration_));
    put_u64(os, rng_digest_);

    for (const Conv& cv : convs_) {
        put_array(os,
                  {static_cast<std::uint32_t>(cv.w.n), static_cast<std::uint32_t>(cv.w.c),
                   static_cast<std::uint32_t>(cv.w.h), static_cast<std::uint32_t>(cv.w.w)},
                  cv.w.data);
        put_array(os, {static_cast<std::uint32_t>(cv.b.size())}, cv.b);
    }
    for (const Bn& bn : bns_) {
        const auto c = static_cast<std::uint32_t>(bn.gamma.size());
        put_array(os, {c}, bn.gamma);
        put_array(os, {c}, bn.beta);
        put_array(os, {c}, bn.run_mean);
        put_array(os, {c}, bn.run_var);
    }

    nlohmann::json meta{{"iteration", iteration_},
                        {"rng_digest", rng_digest_},
                        {"t2_scale_ms", t2_scale_ms_}};
    if (!std::isnan(train_loss_)) meta["train_loss"] = train_loss_;
    const std::string j = meta.dump();
    put_u32(os, static_cast<std::uint32_t>(j.size()));
    os.write(j.data(), static_cast<std::streamsize>(j.size()));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("checkpoint: cannot open for writing: " + path);
    const std::string buf = os.str();
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw IoError("checkpoint: write failed: " + path);
}

template <typename T>
ResNet<T> ResNet<T>::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("checkpoint: bad magic");
    if (get_u32(is) != kVersion) throw IoError("checkpoint: unsupported version");

    NetworkConfig cfg;
    cfg.n_param_layers = static_cast<int>(get_u32(is));
    cfg.filters = static_cast<int>(get_u32(is));
    cfg.kernel = static_cast<int>(get_u32(is));
    cfg.in_channels = static_cast<int>(get_u32(is));
    cfg.out_channels = static_cast<int>(get_u32(is));
    cfg.require_valid();

    ResNet net{Uninit{}};
    net.cfg_ = cfg;
    net.iteration_ = static_cast<std::int64_t>(get_u64(is));
    net.rng_digest_ = get_u64(is);

    const int L = cfg.n_param_layers;
    for (int l = 0; l < L; ++l) {
        const auto in_c = static_cast<std::uint32_t>(l == 0 ? cfg.in_channels : cfg.filters);
        const auto out_c =
            static_cast<std::uint32_t>(l == L - 1 ? cfg.out_channels : cfg.filters);
        const auto k = static_cast<std::uint32_t>(cfg.kernel);
        Conv cv;
        cv.w = Tensor4<T>(static_cast<int>(out_c), static_cast<int>(in_c),
                          static_cast<int>(k), static_cast<int>(k));
        cv.w.data = get_array<T>(is, {out_c, in_c, k, k});
        cv.b = get_array<T>(is, {out_c});
        cv.vw = Tensor4<T>(cv.w.n, cv.w.c, cv.w.h, cv.w.w);
        cv.vb.assign(out_c, T{});
        net.convs_.push_back(std::move(cv));
    }
    for (int l = 0; l < L; ++l) {
        const auto out_c =
            static_cast<std::uint32_t>(l == L - 1 ? cfg.out_channels : cfg.filters);
        Bn bn;
        bn.gamma = get_array<T>(is, {out_c});
        bn.beta = get_array<T>(is, {out_c});
        bn.run_mean = get_array<T>(is, {out_c});
        bn.run_var = get_array<T>(is, {out_c});
        for (const T& v : bn.run_var)
            if (v < T{}) throw IoError("checkpoint: negative running variance");
        bn.vgamma.assign(out_c, T{});
        bn.vbeta.assign(out_c, T{});
        net.bns_.push_back(std::move(bn));
    }

    const std::uint32_t jlen = get_u32(is);
    std::string j(jlen, '\0');
    is.read(j.data(), jlen);
    if (!is) throw IoError("checkpoint: truncated metadata");
    const auto meta = nlohmann::json::parse(j, nullptr, false);
    if (meta.is_discarded()) throw IoError("checkpoint: bad metadata JSON");
    if (meta.contains("t2_scale_ms")) net.t2_scale_ms_ = meta["t2_scale_ms"].get<double>();
    if (meta.contains("train_loss")) net.train_loss_ = meta["train_loss"].get<double>();

    net.conv_in_.resize(L);
    net.relu_in_.resize(L - 1);
    return net;
}

template void ResNet<float>::save(const std::string&) const;
template ResNet<float> ResNet<float>::load(const std::string&);
template void ResNet<double>::save(const std::string&) const;
template ResNet<double> ResNet<double>::load(const std::string&);

} // namespace oled
