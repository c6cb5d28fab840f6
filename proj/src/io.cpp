#include <oled/io.hpp>

#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <oled/errors.hpp>

namespace oled {

namespace {

constexpr char kMagic[4] = {'O', 'I', 'M', 'G'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kDtypeReal = 0;
constexpr std::uint32_t kDtypeComplex = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    std::string path;

    void need(size_t n) const {
        if (pos + n > buf.size()) throw IoError("truncated OIMG file: " + path);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path);
}

struct OimgHeader {
    std::uint32_t rows, cols, channels, dtype, domain;
    nlohmann::json meta;
};

std::string oimg_prefix(const GridSpec& grid, std::uint32_t dtype,
                        std::uint32_t domain, nlohmann::json& meta) {
    grid.require_valid();
    meta["grid"] = {{"rows", grid.rows},
                    {"cols", grid.cols},
                    {"fov_x_cm", grid.fov_x_cm},
                    {"fov_y_cm", grid.fov_y_cm}};
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(grid.rows));
    put_u32(out, static_cast<std::uint32_t>(grid.cols));
    put_u32(out, 1);  // channels
    put_u32(out, dtype);
    put_u32(out, domain);
    return out;
}

void append_meta(std::string& out, const nlohmann::json& meta) {
    const std::string m = meta.dump();
    put_u32(out, static_cast<std::uint32_t>(m.size()));
    out += m;
}

OimgHeader read_header(Reader& rd) {
    rd.need(4);
    if (std::memcmp(rd.buf.data(), kMagic, 4) != 0)
        throw IoError("not an OIMG file: " + rd.path);
    rd.pos = 4;
    const std::uint32_t ver = rd.u32();
    if (ver != kVersion)
        throw IoError("unsupported OIMG version " + std::to_string(ver) + ": " + rd.path);
    OimgHeader h;
    h.rows = rd.u32();
    h.cols = rd.u32();
    h.channels = rd.u32();
    h.dtype = rd.u32();
    h.domain = rd.u32();
    if (h.channels != 1) throw IoError("unsupported channel count: " + rd.path);
    if (h.dtype != kDtypeReal && h.dtype != kDtypeComplex)
        throw IoError("unknown OIMG dtype: " + rd.path);
    if (h.domain > 1) throw IoError("unknown OIMG domain tag: " + rd.path);
    if (h.rows < 1 || h.cols < 1 || h.rows > (1u << 20) || h.cols > (1u << 20))
        throw IoError("implausible OIMG dimensions: " + rd.path);
    return h;
}

nlohmann::json read_meta(Reader& rd) {
    const std::uint32_t len = rd.u32();
    rd.need(len);
    const auto j = nlohmann::json::parse(rd.buf.substr(rd.pos, len), nullptr, false);
    if (j.is_discarded()) throw IoError("corrupt OIMG metadata: " + rd.path);
    rd.pos += len;
    return j;
}

GridSpec grid_from_meta(const OimgHeader& h) {
    GridSpec g{static_cast<int>(h.rows), static_cast<int>(h.cols)};
    if (h.meta.contains("grid")) {
        const auto& jg = h.meta["grid"];
        g.fov_x_cm = jg.value("fov_x_cm", g.fov_x_cm);
        g.fov_y_cm = jg.value("fov_y_cm", g.fov_y_cm);
    }
    return g;
}

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
        return s.substr(1, s.size() - 2);
    return s;
}

}  // namespace

void write_oimg(const std::string& path, const ComplexImage& img,
                nlohmann::json meta) {
    const std::uint32_t dom = img.domain == Domain::kspace ? 1u : 0u;
    std::string out = oimg_prefix(img.grid, kDtypeComplex, dom, meta);
    for (const auto& v : img.data) {
        put_f32(out, static_cast<float>(v.real()));
        put_f32(out, static_cast<float>(v.imag()));
    }
    append_meta(out, meta);
    write_file(path, out);
}

void write_oimg(const std::string& path, const RealRaster& img,
                const GridSpec& grid, nlohmann::json meta) {
    if (img.rows() != grid.rows || img.cols() != grid.cols)
        throw ConfigError("write_oimg: raster does not match grid");
    std::string out = oimg_prefix(grid, kDtypeReal, 0, meta);
    for (double v : img) put_f32(out, static_cast<float>(v));
    append_meta(out, meta);
    write_file(path, out);
}

ComplexImage read_oimg_complex(const std::string& path, nlohmann::json* meta) {
    const std::string buf = slurp(path);
    Reader rd{buf, 0, path};
    OimgHeader h = read_header(rd);
    if (h.dtype != kDtypeComplex) throw IoError("expected complex OIMG: " + path);
    std::vector<std::complex<double>> vals(static_cast<size_t>(h.rows) * h.cols);
    for (auto& v : vals) {
        const double re = rd.f32();
        const double im = rd.f32();
        v = {re, im};
    }
    h.meta = read_meta(rd);
    if (meta) *meta = h.meta;
    ComplexImage img;
    img.grid = grid_from_meta(h);
    img.domain = h.domain == 1 ? Domain::kspace : Domain::image;
    img.data = Raster<std::complex<double>>(static_cast<int>(h.rows),
                                            static_cast<int>(h.cols));
    std::copy(vals.begin(), vals.end(), img.data.begin());
    return img;
}

RealRaster read_oimg_real(const std::string& path, nlohmann::json* meta,
                          GridSpec* grid) {
    const std::string buf = slurp(path);
    Reader rd{buf, 0, path};
    OimgHeader h = read_header(rd);
    if (h.dtype != kDtypeReal) throw IoError("expected real OIMG: " + path);
    RealRaster img(static_cast<int>(h.rows), static_cast<int>(h.cols));
    for (auto& v : img) v = rd.f32();
    h.meta = read_meta(rd);
    if (meta) *meta = h.meta;
    if (grid) *grid = grid_from_meta(h);
    return img;
}

nlohmann::json sequence_params_to_json(const SequenceParams& p) {
    return {{"alpha_deg", p.alpha_deg},
            {"beta_deg", p.beta_deg},
            {"te1_ms", p.te1_ms},
            {"te2_ms", p.te2_ms},
            {"shift1_cyc", {p.shift1_cyc[0], p.shift1_cyc[1]}},
            {"shift2_cyc", {p.shift2_cyc[0], p.shift2_cyc[1]}},
            {"shift3_cyc", {p.shift3_cyc[0], p.shift3_cyc[1]}}};
}

SequenceParams sequence_params_from_json(const nlohmann::json& j) {
    SequenceParams p;
    try {
        p.alpha_deg = j.at("alpha_deg").get<double>();
        p.beta_deg = j.at("beta_deg").get<double>();
        p.te1_ms = j.at("te1_ms").get<double>();
        p.te2_ms = j.at("te2_ms").get<double>();
        for (int i = 0; i < 2; ++i) {
            p.shift1_cyc[i] = j.at("shift1_cyc").at(i).get<double>();
            p.shift2_cyc[i] = j.at("shift2_cyc").at(i).get<double>();
            p.shift3_cyc[i] = j.at("shift3_cyc").at(i).get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad sequence params: ") + e.what());
    }
    return p;
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
    nlohmann::json j;
    j["version"] = m.version;
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : m.records) {
        recs.push_back({{"oled_path", r.oled_path},
                        {"t2_path", r.t2_path},
                        {"seed", r.seed},
                        {"params", sequence_params_to_json(r.params)},
                        {"jitter_applied", r.jitter_applied},
                        {"split", r.split}});
    }
    j["records"] = recs;
    write_file(path, j.dump(2) + "\n");
}

DatasetManifest read_manifest(const std::string& path) {
    const auto j = nlohmann::json::parse(slurp(path), nullptr, false);
    if (j.is_discarded()) throw IoError("corrupt manifest JSON: " + path);
    DatasetManifest m;
    try {
        m.version = j.at("version").get<std::uint32_t>();
        if (m.version != 1)
            throw IoError("unsupported manifest version: " + path);
        for (const auto& jr : j.at("records")) {
            SampleRecord r;
            r.oled_path = jr.at("oled_path").get<std::string>();
            r.t2_path = jr.at("t2_path").get<std::string>();
            r.seed = jr.at("seed").get<std::uint64_t>();
            r.params = sequence_params_from_json(jr.at("params"));
            r.jitter_applied = jr.at("jitter_applied").get<bool>();
            r.split = jr.at("split").get<std::string>();
            m.records.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad manifest: ") + path + ": " + e.what());
    }
    return m;
}

void validate_manifest(const std::string& manifest_path) {
    const DatasetManifest m = read_manifest(manifest_path);
    const auto dir = std::filesystem::path(manifest_path).parent_path();
    std::set<std::string> seen;
    for (const auto& r : m.records) {
        if (r.split != "train" && r.split != "test")
            throw ConfigError("manifest: unknown split '" + r.split + "'");
        for (const auto& p : {r.oled_path, r.t2_path}) {
            if (!seen.insert(p).second)
                throw ConfigError("manifest: file referenced twice: " + p);
        }
        read_oimg_complex((dir / r.oled_path).string());  // throws if missing/corrupt
        read_oimg_real((dir / r.t2_path).string());
    }
}

Config Config::parse_file(const std::string& path) {
    return parse_string(slurp(path));
}

Config Config::parse_string(const std::string& text) {
    Config cfg;
    std::istringstream ss(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        // strip comments outside quotes
        bool in_q = false;
        for (size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_q = !in_q;
            if (line[i] == '#' && !in_q) {
                line.resize(i);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": empty section name");
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (!cfg.values_.emplace(full, val).second)
            throw ConfigError("config: duplicate key '" + full + "'");
    }
    return cfg;
}

const std::string& Config::raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: missing key '" + key + "'");
    return it->second;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

double Config::get_double(const std::string& key) const {
    const std::string& v = raw(key);
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size() || v.empty())
        throw ConfigError("config: key '" + key + "' is not a number: " + v);
    return x;
}

double Config::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

std::int64_t Config::get_int(const std::string& key) const {
    const std::string& v = raw(key);
    char* end = nullptr;
    const long long x = std::strtoll(v.c_str(), &end, 10);
    if (end != v.c_str() + v.size() || v.empty())
        throw ConfigError("config: key '" + key + "' is not an integer: " + v);
    return x;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

bool Config::get_bool(const std::string& key) const {
    const std::string& v = raw(key);
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError("config: key '" + key + "' is not a boolean: " + v);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    return has(key) ? get_bool(key) : fallback;
}

std::string Config::get_string(const std::string& key) const {
    return unquote(raw(key));
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
}

std::vector<double> Config::get_double_array(const std::string& key) const {
    const std::string& v = raw(key);
    if (v.size() < 2 || v.front() != '[' || v.back() != ']')
        throw ConfigError("config: key '" + key + "' is not an array: " + v);
    std::vector<double> out;
    std::string body = v.substr(1, v.size() - 2);
    std::istringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty())
            throw ConfigError("config: key '" + key + "' has an empty array element");
        char* end = nullptr;
        const double x = std::strtod(item.c_str(), &end);
        if (end != item.c_str() + item.size())
            throw ConfigError("config: array element not a number in '" + key + "'");
        out.push_back(x);
    }
    return out;
}

std::vector<std::string> Config::keys() const {
    std::vector<std::string> out;
    out.reserve(values_.size());
    for (const auto& [k, _] : values_) out.push_back(k);
    return out;
}

}  // namespace oled
