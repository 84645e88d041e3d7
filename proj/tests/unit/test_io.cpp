#include "dasleak/cube_io.hpp"
#include "dasleak/error.hpp"
#include "dasleak/nn/checkpoint.hpp"
#include "dasleak/recording_io.hpp"
#include "dasleak/rng.hpp"

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace dasleak;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("dasleak-io-" + std::to_string(::getpid()) + "-" +
                                            std::to_string(Rng(std::random_device{}()).next_u64()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << bytes;
}

DasRecording small_recording() {
    DasConfig cfg;
    cfg.channel_count = 12;
    auto spec = reference_cases(0.2, 5)[2];
    spec.leak->position = 4.0;
    return simulate_case(spec, cfg, PipeSpec{}, SignalModel{});
}

std::vector<FeatureCube> random_cubes(std::size_t n, std::size_t depth) {
    Rng rng(13);
    std::vector<FeatureCube> cubes(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& c = cubes[i];
        c.bands = 4;
        c.frames = 6;
        c.depth = depth;
        c.center_channel = 2 + i;
        c.window_index = i / 2;
        c.label = i % 3 == 0 ? CubeLabel::Leak : CubeLabel::NonLeak;
        c.values.resize(4 * 6 * depth);
        for (auto& v : c.values) v = static_cast<float>(rng.normal());
    }
    return cubes;
}

} // namespace

TEST_CASE("recording round-trips bit-exactly with its sidecar") {
    TempDir dir;
    const auto rec = small_recording();
    const auto path = dir.path / "r.dasr";
    write_recording(rec, path);
    CHECK(fs::exists(truth_path_for(path)));
    const auto back = read_recording(path);
    CHECK(back.samples == rec.samples);
    CHECK(back.samples_per_channel == rec.samples_per_channel);
    CHECK(back.config.channel_count == 12);
    CHECK(back.truth.spec.case_id == rec.truth.spec.case_id);
    CHECK(back.truth.spec.leak->orifice_diameter == rec.truth.spec.leak->orifice_diameter);
    CHECK(back.truth.layout.tags == rec.truth.layout.tags);
    write_recording(back, dir.path / "s.dasr");
    CHECK(slurp(path) == slurp(dir.path / "s.dasr"));
}

TEST_CASE("damaged recordings are rejected") {
    TempDir dir;
    const auto path = dir.path / "r.dasr";
    write_recording(small_recording(), path);
    const auto bytes = slurp(path);

    spit(path, bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_recording(path), FormatError);
    auto bad = bytes;
    bad[0] = 'X';
    spit(path, bad);
    CHECK_THROWS_WITH_AS(read_recording(path), doctest::Contains("r.dasr"), FormatError);
    spit(path, bytes + "x");
    CHECK_THROWS_AS(read_recording(path), FormatError);
    spit(path, bytes);
    fs::remove(truth_path_for(path));
    CHECK_THROWS(read_recording(path));
}

TEST_CASE("cube files round-trip and reject damage") {
    TempDir dir;
    const auto cubes = random_cubes(7, 5);
    const auto path = dir.path / "c.cubes";
    write_cube_file(path, cubes);
    const auto back = read_cube_file(path);
    REQUIRE(back.size() == cubes.size());
    for (std::size_t i = 0; i < cubes.size(); ++i) {
        CHECK(back[i].values == cubes[i].values);
        CHECK(back[i].label == cubes[i].label);
        CHECK(back[i].center_channel == cubes[i].center_channel);
        CHECK(back[i].window_index == cubes[i].window_index);
    }
    const auto bytes = slurp(path);
    spit(path, bytes.substr(0, bytes.size() - 1));
    CHECK_THROWS_AS(read_cube_file(path), FormatError);
    auto bad = bytes;
    bad[1] = '?';
    spit(path, bad);
    CHECK_THROWS_AS(read_cube_file(path), FormatError);
    bad = bytes;
    bad[4] = 9;   // version
    spit(path, bad);
    CHECK_THROWS_AS(read_cube_file(path), FormatError);
    bad = bytes;
    bad[4 + 2 + 6 + 8 + 8] = 7;   // label byte of the first cube
    spit(path, bad);
    CHECK_THROWS_AS(read_cube_file(path), FormatError);
}

TEST_CASE("cube writer refuses a count mismatch and leaves no file") {
    TempDir dir;
    const auto cubes = random_cubes(2, 3);
    {
        CubeFileWriter w(dir.path / "x.cubes", 3, 4, 6, 3);
        w.write(cubes[0]);
        w.write(cubes[1]);
        CHECK_THROWS_AS(w.commit(), DomainError);
    }
    CHECK_FALSE(fs::exists(dir.path / "x.cubes"));
}

TEST_CASE("checkpoints round-trip and reject damage or a different network") {
    TempDir dir;
    const auto spec3 = nn::ArchitectureSpec::table(nn::Variant::Cnn3D, 5);
    auto model = nn::init_model<float>(spec3, 77);
    model.params.blocks[1].running_mean[3] = 0.25f;
    const auto path = dir.path / "m.dasm";
    nn::save_checkpoint(model, path);
    const auto back = nn::load_checkpoint(path, spec3);
    CHECK(back.spec == spec3);
    CHECK(back.seed == 77);
    std::vector<std::vector<float>> a, b;
    model.params.for_each([&](const std::string&, const nn::Tensor<float>& t) { a.emplace_back(t.storage().begin(), t.storage().end()); });
    back.params.for_each([&](const std::string&, const nn::Tensor<float>& t) { b.emplace_back(t.storage().begin(), t.storage().end()); });
    CHECK(a == b);
    nn::save_checkpoint(back, dir.path / "n.dasm");
    CHECK(slurp(path) == slurp(dir.path / "n.dasm"));

    CHECK_THROWS_AS(nn::load_checkpoint(path, nn::ArchitectureSpec::table(nn::Variant::Cnn2D, 5)), FormatError);
    CHECK_THROWS_AS(nn::load_checkpoint(path, nn::ArchitectureSpec::table(nn::Variant::Cnn3D, 7)), FormatError);
    const auto bytes = slurp(path);
    for (std::size_t cut : {std::size_t{3}, std::size_t{40}, bytes.size() / 2, bytes.size() - 1}) {
        spit(path, bytes.substr(0, cut));
        CHECK_THROWS_AS(nn::load_checkpoint(path), FormatError);
    }
    spit(path, bytes + std::string(4, '\0'));
    CHECK_THROWS_AS(nn::load_checkpoint(path), FormatError);
    auto bad = bytes;
    bad[2] = 'X';
    spit(path, bad);
    CHECK_THROWS_AS(nn::load_checkpoint(path), FormatError);
}

TEST_CASE("manifest and truth sidecars round-trip") {
    TempDir dir;
    DatasetManifest m;
    m.entries.push_back({"case01", "case01.dasr", "case01.truth", 99, 0.427e-3, 0.319e-3, 3.72e-3, 120.0});
    write_manifest(m, dir.path / "manifest.json");
    const auto back = read_manifest(dir.path / "manifest.json");
    REQUIRE(back.entries.size() == 1);
    CHECK(back.entries[0].case_id == "case01");
    CHECK(back.entries[0].leak_flow_rate == 0.319e-3);
    spit(dir.path / "bad.json", "{\"entries\": [{\"case_id\": 3}]}");
    CHECK_THROWS_AS(read_manifest(dir.path / "bad.json"), FormatError);
}
