#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include <oled/grid.hpp>
#include <oled/seqsim.hpp>

namespace oled {

// Binary image container.  Layout, all little-endian:
//   magic "OIMG" | version u32 | rows u32 | cols u32 | channels u32
//   | dtype u32 (0 = f32 real, 1 = f32 complex interleaved)
//   | domain u32 (0 = image, 1 = kspace)
//   | payload (rows*cols*channels values, row-major, complex as re,im pairs)
//   | meta_len u32 | JSON metadata
// Values are stored as f32; write(read(p)) is byte-identical.
// write_oimg merges a "grid" object (rows/cols/fov) into the caller metadata.

void write_oimg(const std::string& path, const ComplexImage& img,
                nlohmann::json meta = nlohmann::json::object());
void write_oimg(const std::string& path, const RealRaster& img,
                const GridSpec& grid,
                nlohmann::json meta = nlohmann::json::object());

ComplexImage read_oimg_complex(const std::string& path,
                               nlohmann::json* meta = nullptr);
RealRaster read_oimg_real(const std::string& path,
                          nlohmann::json* meta = nullptr,
                          GridSpec* grid = nullptr);

nlohmann::json sequence_params_to_json(const SequenceParams& p);
SequenceParams sequence_params_from_json(const nlohmann::json& j);

struct SampleRecord {
    std::string oled_path;  // relative to the manifest directory
    std::string t2_path;
    std::uint64_t seed = 0;
    SequenceParams params;
    bool jitter_applied = false;
    std::string split;  // "train" or "test"
};

struct DatasetManifest {
    std::uint32_t version = 1;
    std::vector<SampleRecord> records;
};

void write_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::string& path);

// Checks every referenced file exists and parses as OIMG, splits are valid
// ("train"/"test") and no file is referenced twice.  Throws IoError/ConfigError.
void validate_manifest(const std::string& manifest_path);

// Flat key-value config: "[section]" headers, "key = value" lines, "#" comments.
// Values: numbers, booleans, quoted or bare strings, [v1, v2, ...] arrays.
// Keys are addressed as "section.key" ("key" alone before any section header).
class Config {
  public:
    static Config parse_file(const std::string& path);
    static Config parse_string(const std::string& text);

    bool has(const std::string& key) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    bool get_bool(const std::string& key) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key,
                           const std::string& fallback) const;
    std::vector<double> get_double_array(const std::string& key) const;
    std::vector<std::string> keys() const;

  private:
    const std::string& raw(const std::string& key) const;
    std::map<std::string, std::string> values_;
};

}  // namespace oled
