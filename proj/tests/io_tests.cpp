#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include <oled/io.hpp>

using namespace oled;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / "oled_io_test") {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(bool(f));
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    REQUIRE(bool(f));
}

// Dyadic values survive the f64 -> f32 -> f64 round trip exactly.
ComplexImage sample_complex(int rows, int cols) {
    auto img = make_complex_image(GridSpec{rows, cols, 24.0, 18.0}, Domain::kspace);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            img.data(r, c) = {r + 0.5, c - 2.25};
    return img;
}

} // namespace

TEST_SUITE("io") {

TEST_CASE("complex container: write, read, rewrite is byte-identical") {
    TempDir td;
    const auto img = sample_complex(8, 9);
    nlohmann::json meta{{"provenance_seed", 42}};
    const auto p1 = td.file("a.oimg");
    const auto p2 = td.file("b.oimg");
    write_oimg(p1, img, meta);

    nlohmann::json meta2;
    const auto back = read_oimg_complex(p1, &meta2);
    CHECK(back.grid.rows == 8);
    CHECK(back.grid.cols == 9);
    CHECK(back.grid.fov_x_cm == doctest::Approx(24.0));
    CHECK(back.grid.fov_y_cm == doctest::Approx(18.0));
    CHECK(back.domain == Domain::kspace);
    CHECK(back.data == img.data);
    CHECK(meta2["provenance_seed"].get<int>() == 42);
    CHECK(meta2["grid"]["rows"].get<int>() == 8);

    write_oimg(p2, back, meta2);
    CHECK(slurp_bytes(p1) == slurp_bytes(p2));
}

TEST_CASE("real container: write, read, rewrite is byte-identical") {
    TempDir td;
    RealRaster t2(8, 10);
    for (std::int64_t i = 0; i < t2.size(); ++i) t2[i] = 0.125 * static_cast<double>(i);
    const GridSpec grid{8, 10, 22.0, 22.0};
    const auto p1 = td.file("a.oimg");
    const auto p2 = td.file("b.oimg");
    write_oimg(p1, t2, grid, {{"kind", "t2_map"}});

    nlohmann::json meta;
    GridSpec grid2;
    const auto back = read_oimg_real(p1, &meta, &grid2);
    CHECK(back == t2);
    CHECK(grid2.rows == 8);
    CHECK(grid2.cols == 10);
    CHECK(meta["kind"] == "t2_map");

    write_oimg(p2, back, grid2, meta);
    CHECK(slurp_bytes(p1) == slurp_bytes(p2));

    CHECK_THROWS_AS(write_oimg(td.file("c.oimg"), t2, GridSpec{9, 9, 22.0, 22.0}),
                    ConfigError);
}

TEST_CASE("corrupt containers are rejected") {
    TempDir td;
    const auto good = td.file("good.oimg");
    write_oimg(good, sample_complex(8, 8));
    const std::string bytes = slurp_bytes(good);
    const auto bad = td.file("bad.oimg");

    auto mutated = bytes;
    mutated[0] = 'X'; // magic
    write_bytes(bad, mutated);
    CHECK_THROWS_AS(read_oimg_complex(bad), IoError);

    mutated = bytes;
    mutated[4] = 9; // version
    write_bytes(bad, mutated);
    CHECK_THROWS_AS(read_oimg_complex(bad), IoError);

    mutated = bytes;
    mutated[20] = 7; // dtype code
    write_bytes(bad, mutated);
    CHECK_THROWS_AS(read_oimg_complex(bad), IoError);

    write_bytes(bad, bytes.substr(0, bytes.size() / 2)); // truncated payload
    CHECK_THROWS_AS(read_oimg_complex(bad), IoError);

    mutated = bytes;
    mutated[mutated.size() - 1] = '{'; // metadata no longer parses
    write_bytes(bad, mutated);
    CHECK_THROWS_AS(read_oimg_complex(bad), IoError);

    // dtype mixups in both directions
    CHECK_THROWS_AS(read_oimg_real(good), IoError);
    const auto realp = td.file("real.oimg");
    write_oimg(realp, RealRaster(8, 8, 1.0), GridSpec{8, 8, 22.0, 22.0});
    CHECK_THROWS_AS(read_oimg_complex(realp), IoError);

    CHECK_THROWS_AS(read_oimg_complex(td.file("missing.oimg")), IoError);
    CHECK_THROWS_AS(write_oimg("/nonexistent_dir_zz/x.oimg", sample_complex(8, 8)),
                    IoError);
}

TEST_CASE("sequence parameters round-trip through json") {
    SequenceParams p;
    p.alpha_deg = 30.0;
    p.te2_ms = 70.5;
    p.shift3_cyc = {1.5, -64.0};
    const auto j = sequence_params_to_json(p);
    const auto q = sequence_params_from_json(j);
    CHECK(q.alpha_deg == p.alpha_deg);
    CHECK(q.beta_deg == p.beta_deg);
    CHECK(q.te1_ms == p.te1_ms);
    CHECK(q.te2_ms == p.te2_ms);
    CHECK(q.shift1_cyc == p.shift1_cyc);
    CHECK(q.shift2_cyc == p.shift2_cyc);
    CHECK(q.shift3_cyc == p.shift3_cyc);

    auto broken = j;
    broken.erase("te1_ms");
    CHECK_THROWS_AS(sequence_params_from_json(broken), IoError);
    CHECK_THROWS_AS(sequence_params_from_json(nlohmann::json{{"alpha_deg", "x"}}),
                    IoError);
}

TEST_CASE("manifest round-trips and validates referenced files") {
    TempDir td;
    write_oimg(td.file("s0.oimg"), sample_complex(8, 8));
    write_oimg(td.file("s0_t2.oimg"), RealRaster(8, 8, 80.0), GridSpec{8, 8, 22.0, 22.0});
    write_oimg(td.file("s1.oimg"), sample_complex(8, 8));
    write_oimg(td.file("s1_t2.oimg"), RealRaster(8, 8, 90.0), GridSpec{8, 8, 22.0, 22.0});

    DatasetManifest m;
    SampleRecord r0;
    r0.oled_path = "s0.oimg";
    r0.t2_path = "s0_t2.oimg";
    r0.seed = 11;
    r0.split = "train";
    SampleRecord r1;
    r1.oled_path = "s1.oimg";
    r1.t2_path = "s1_t2.oimg";
    r1.seed = 12;
    r1.params.alpha_deg = 44.0;
    r1.jitter_applied = true;
    r1.split = "test";
    m.records = {r0, r1};

    const auto mp = td.file("manifest.json");
    write_manifest(mp, m);
    const auto back = read_manifest(mp);
    REQUIRE(back.records.size() == 2);
    CHECK(back.version == 1);
    CHECK(back.records[0].oled_path == "s0.oimg");
    CHECK(back.records[0].seed == 11);
    CHECK(back.records[0].split == "train");
    CHECK_FALSE(back.records[0].jitter_applied);
    CHECK(back.records[1].params.alpha_deg == 44.0);
    CHECK(back.records[1].jitter_applied);
    CHECK(back.records[1].split == "test");

    validate_manifest(mp); // everything present and well-formed

    auto bad = m;
    bad.records[1].split = "holdout";
    write_manifest(mp, bad);
    CHECK_THROWS_AS(validate_manifest(mp), ConfigError);

    bad = m;
    bad.records[1].oled_path = "s0.oimg"; // referenced twice
    write_manifest(mp, bad);
    CHECK_THROWS_AS(validate_manifest(mp), ConfigError);

    bad = m;
    bad.records[1].t2_path = "gone.oimg";
    write_manifest(mp, bad);
    CHECK_THROWS_AS(validate_manifest(mp), IoError);

    write_bytes(mp, "{not json");
    CHECK_THROWS_AS(read_manifest(mp), IoError);
    write_bytes(mp, R"({"version": 3, "records": []})");
    CHECK_THROWS_AS(read_manifest(mp), IoError);
    write_bytes(mp, R"({"version": 1})");
    CHECK_THROWS_AS(read_manifest(mp), IoError);
}

TEST_CASE("config parses sections, arrays, comments, and quoting") {
    const auto cfg = Config::parse_string(R"(
top_level = 3            # bare key before any section
[dataset]
count = 36               # inline comment
rows = 64
label = "a # quoted hash"   # hash inside quotes survives
bare = plain_string
frac = -1.5e-2
flag = true
off = false
lr_values = [0.1, 0.01, 0.001]
empty_list = []
[detach]
count = 7                # same key, different section
)");
    CHECK(cfg.get_int("top_level") == 3);
    CHECK(cfg.get_int("dataset.count") == 36);
    CHECK(cfg.get_int("detach.count") == 7);
    CHECK(cfg.get_double("dataset.frac") == doctest::Approx(-0.015));
    CHECK(cfg.get_string("dataset.label") == "a # quoted hash");
    CHECK(cfg.get_string("dataset.bare") == "plain_string");
    CHECK(cfg.get_bool("dataset.flag"));
    CHECK_FALSE(cfg.get_bool("dataset.off"));
    const auto arr = cfg.get_double_array("dataset.lr_values");
    REQUIRE(arr.size() == 3);
    CHECK(arr[0] == 0.1);
    CHECK(arr[2] == 0.001);
    CHECK(cfg.get_double_array("dataset.empty_list").empty());

    CHECK(cfg.has("dataset.rows"));
    CHECK_FALSE(cfg.has("dataset.missing"));
    CHECK(cfg.get_int("dataset.missing", 9) == 9);
    CHECK(cfg.get_double("dataset.missing", 2.5) == 2.5);
    CHECK(cfg.get_bool("dataset.missing", true));
    CHECK(cfg.get_string("dataset.missing", "dflt") == "dflt");

    const auto keys = cfg.keys();
    CHECK(keys.size() == 11);
}

TEST_CASE("config rejects malformed input") {
    CHECK_THROWS_AS(Config::parse_string("a = 1\na = 2\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse_string("[s]\na = 1\n[s]\na = 2\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse_string("[broken\na = 1\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse_string("[]\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse_string("= 5\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse_string("no_equals_here\n"), ConfigError);

    const auto cfg = Config::parse_string("x = banana\nf = 2.5\nlist = [1, , 3]\nnot_list = 4\n");
    CHECK_THROWS_AS(cfg.get_double("x"), ConfigError);
    CHECK_THROWS_AS(cfg.get_int("f"), ConfigError);
    CHECK_THROWS_AS(cfg.get_bool("x"), ConfigError);
    CHECK_THROWS_AS(cfg.get_double("missing"), ConfigError);
    CHECK_THROWS_AS(cfg.get_double_array("list"), ConfigError);
    CHECK_THROWS_AS(cfg.get_double_array("not_list"), ConfigError);
    CHECK_THROWS_AS(cfg.get_double_array("x"), ConfigError);

    CHECK_THROWS_AS(Config::parse_file("/nonexistent_dir_zz/conf.cfg"), IoError);
}

TEST_CASE("config files parse the same as strings") {
    TempDir td;
    const auto p = td.file("t.cfg");
    write_bytes(p, "[a]\nk = 5\n");
    const auto cfg = Config::parse_file(p);
    CHECK(cfg.get_int("a.k") == 5);
}

} // TEST_SUITE