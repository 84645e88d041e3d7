#include "dasleak/cube_io.hpp"

#include "dasleak/error.hpp"

#include <cmath>

namespace dasleak {

namespace {

CubeLabel parse_label(std::uint8_t raw, const std::string& source) {
    switch (raw) {
    case 0: return CubeLabel::NonLeak;
    case 1: return CubeLabel::Leak;
    case 255: return CubeLabel::Unlabeled;
    default: throw FormatError(source + ": invalid cube label " + std::to_string(raw));
    }
}

} // namespace

CubeFileWriter::CubeFileWriter(const std::filesystem::path& path, std::size_t depth, std::size_t bands,
                               std::size_t frames, std::uint64_t cube_count)
    : file_(path), writer_(file_.stream()), depth_(depth), bands_(bands), frames_(frames), expected_(cube_count) {
    require(depth > 0 && depth <= 0xffff && bands > 0 && bands <= 0xffff && frames > 0 && frames <= 0xffff,
            "cube dimensions do not fit the file header");
    writer_.put_magic({kCubeMagic, 4});
    writer_.put<std::uint16_t>(kCubeVersion);
    writer_.put<std::uint16_t>(static_cast<std::uint16_t>(depth));
    writer_.put<std::uint16_t>(static_cast<std::uint16_t>(bands));
    writer_.put<std::uint16_t>(static_cast<std::uint16_t>(frames));
    writer_.put<std::uint64_t>(cube_count);
}

void CubeFileWriter::write(const FeatureCube& cube) {
    require(cube.depth == depth_ && cube.bands == bands_ && cube.frames == frames_ &&
                cube.values.size() == depth_ * bands_ * frames_,
            "cube shape does not match the file");
    require(written_ < expected_, "more cubes written than declared");
    writer_.put<std::uint32_t>(static_cast<std::uint32_t>(cube.center_channel));
    writer_.put<std::uint32_t>(static_cast<std::uint32_t>(cube.window_index));
    writer_.put<std::uint8_t>(static_cast<std::uint8_t>(cube.label));
    writer_.put_array<float>(cube.values);
    ++written_;
}

void CubeFileWriter::commit() {
    require(written_ == expected_, "fewer cubes written than declared");
    file_.commit();
}

CubeFileReader::CubeFileReader(const std::filesystem::path& path)
    : in_(path, std::ios::binary), reader_(in_, path.string()) {
    if (!in_) throw IoError("cannot open cube file " + path.string());
    reader_.expect_magic({kCubeMagic, 4});
    const auto version = reader_.get<std::uint16_t>("version");
    if (version != kCubeVersion)
        throw FormatError(path.string() + ": unsupported cube file version " + std::to_string(version));
    depth_ = reader_.get<std::uint16_t>("depth");
    bands_ = reader_.get<std::uint16_t>("bands");
    frames_ = reader_.get<std::uint16_t>("frames");
    count_ = reader_.get<std::uint64_t>("cube count");
    if (depth_ == 0 || bands_ == 0 || frames_ == 0) throw FormatError(path.string() + ": zero cube dimension");

    const std::uintmax_t header = 4 + 2 + 2 + 2 + 2 + 8;
    const std::uintmax_t per_cube = 4 + 4 + 1 + 4ull * depth_ * bands_ * frames_;
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    if (ec || size != header + per_cube * count_)
        throw FormatError(path.string() + ": file size does not match header (truncated or corrupted)");
}

std::optional<FeatureCube> CubeFileReader::next() {
    if (read_ == count_) return std::nullopt;
    FeatureCube cube;
    cube.depth = depth_;
    cube.bands = bands_;
    cube.frames = frames_;
    cube.center_channel = reader_.get<std::uint32_t>("centre channel");
    cube.window_index = reader_.get<std::uint32_t>("window index");
    cube.label = parse_label(reader_.get<std::uint8_t>("label"), reader_.source());
    cube.values.resize(depth_ * bands_ * frames_);
    reader_.get_array<float>(cube.values, "cube values");
    for (float v : cube.values)
        if (!std::isfinite(v)) throw FormatError(reader_.source() + ": non-finite cube value");
    ++read_;
    return cube;
}

void write_cube_file(const std::filesystem::path& path, const std::vector<FeatureCube>& cubes) {
    require(!cubes.empty(), "no cubes to write");
    const auto& first = cubes.front();
    CubeFileWriter writer(path, first.depth, first.bands, first.frames, cubes.size());
    for (const auto& c : cubes) writer.write(c);
    writer.commit();
}

std::vector<FeatureCube> read_cube_file(const std::filesystem::path& path) {
    CubeFileReader reader(path);
    std::vector<FeatureCube> cubes;
    cubes.reserve(reader.cube_count());
    while (auto c = reader.next()) cubes.push_back(std::move(*c));
    return cubes;
}

} // namespace dasleak
