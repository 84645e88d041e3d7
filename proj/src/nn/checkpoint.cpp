#include "dasleak/nn/checkpoint.hpp"

#include "dasleak/binary_io.hpp"

#include <map>

namespace dasleak::nn {

namespace {

void put_u16(io::BinaryWriter& w, std::size_t v) {
    require(v <= 0xffff, "architecture dimension does not fit the checkpoint header");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(v));
}

void write_spec(io::BinaryWriter& w, const ArchitectureSpec& spec) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(spec.variant));
    put_u16(w, spec.cube_depth);
    w.put<float>(spec.dropout_rate);
    for (auto d : spec.input_shape) put_u16(w, d);
    put_u16(w, spec.blocks.size());
    for (const auto& b : spec.blocks) {
        for (auto k : b.kernel) put_u16(w, k);
        put_u16(w, b.out_channels);
        for (auto p : b.pool) put_u16(w, p);
    }
    put_u16(w, spec.dense.size());
    for (const auto& d : spec.dense) {
        put_u16(w, d.in);
        put_u16(w, d.out);
    }
}

ArchitectureSpec read_spec(io::BinaryReader& r) {
    ArchitectureSpec spec;
    const auto variant = r.get<std::uint8_t>("variant");
    if (variant != 2 && variant != 3) throw FormatError(r.source() + ": unknown network variant " + std::to_string(variant));
    spec.variant = static_cast<Variant>(variant);
    spec.cube_depth = r.get<std::uint16_t>("cube depth");
    spec.dropout_rate = r.get<float>("dropout rate");
    for (auto& d : spec.input_shape) d = r.get<std::uint16_t>("input shape");
    const auto blocks = r.get<std::uint16_t>("block count");
    for (std::size_t i = 0; i < blocks; ++i) {
        ConvBlockSpec b;
        for (auto& k : b.kernel) k = r.get<std::uint16_t>("kernel extent");
        b.out_channels = r.get<std::uint16_t>("block channels");
        for (auto& p : b.pool) p = r.get<std::uint16_t>("pool window");
        spec.blocks.push_back(b);
    }
    const auto dense = r.get<std::uint16_t>("dense count");
    for (std::size_t i = 0; i < dense; ++i) {
        DenseSpec d;
        d.in = r.get<std::uint16_t>("dense input");
        d.out = r.get<std::uint16_t>("dense output");
        spec.dense.push_back(d);
    }
    try {
        spec.validate();
    } catch (const DomainError& e) {
        throw FormatError(r.source() + ": inconsistent architecture: " + e.what());
    }
    return spec;
}

} // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    io::AtomicFile file(path);
    io::BinaryWriter w(file.stream());
    w.put_magic({kCheckpointMagic, 4});
    w.put<std::uint16_t>(kCheckpointVersion);
    write_spec(w, model.spec);
    w.put<std::uint64_t>(model.seed);
    std::uint32_t count = 0;
    model.params.for_each([&](const std::string&, const Tensor<float>&) { ++count; });
    w.put<std::uint32_t>(count);
    model.params.for_each([&](const std::string& name, const Tensor<float>& t) {
        put_u16(w, name.size());
        w.put_bytes(name);
        w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
        for (auto d : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
        w.put_array<float>(t.values());
    });
    if (!w.good()) throw IoError("failed writing checkpoint " + path.string());
    file.commit();
}

Model load_checkpoint(const std::filesystem::path& path, const std::optional<ArchitectureSpec>& expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    io::BinaryReader r(in, path.string());
    r.expect_magic({kCheckpointMagic, 4});
    const auto version = r.get<std::uint16_t>("version");
    if (version != kCheckpointVersion)
        throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));

    Model model;
    model.spec = read_spec(r);
    if (expected && !(*expected == model.spec))
        throw FormatError(path.string() + ": checkpoint holds a " + to_string(model.spec.variant) + " network with Z=" +
                          std::to_string(model.spec.cube_depth) + ", which does not match the requested " +
                          to_string(expected->variant) + " network with Z=" + std::to_string(expected->cube_depth));
    model.seed = r.get<std::uint64_t>("seed");
    model.params = ParameterSet<float>::shaped(model.spec);

    std::map<std::string, Tensor<float>*> slots;
    model.params.for_each([&](const std::string& name, Tensor<float>& t) { slots[name] = &t; });
    const auto count = r.get<std::uint32_t>("record count");
    if (count != slots.size())
        throw FormatError(path.string() + ": expected " + std::to_string(slots.size()) + " tensors, found " +
                          std::to_string(count));
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = r.get<std::uint16_t>("name length");
        const std::string name = r.get_bytes(len, "tensor name");
        auto it = slots.find(name);
        if (it == slots.end() || !it->second) throw FormatError(path.string() + ": unexpected or repeated tensor " + name);
        Tensor<float>& t = *it->second;
        it->second = nullptr;
        const auto rank = r.get<std::uint8_t>("rank");
        Shape shape(rank);
        for (auto& d : shape) d = r.get<std::uint32_t>("dimension");
        if (shape != t.shape())
            throw FormatError(path.string() + ": tensor " + name + " has shape " + shape_string(shape) + ", expected " +
                              shape_string(t.shape()));
        r.get_array<float>(t.values(), "tensor data");
    }
    r.expect_end();
    return model;
}

} // namespace dasleak::nn
