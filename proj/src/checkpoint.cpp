#include "gaitml/checkpoint.hpp"

#include "gaitml/binary_io.hpp"

namespace gaitml {

void save_checkpoint(const std::string& path, const named_tensors& params) {
    binary::writer w;
    w.magic("GMLB");
    w.u32(checkpoint_version);
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
        for (double v : t.data()) w.f64(v);
    }
    w.write_file(path);
}

named_tensors load_checkpoint(const std::string& path) {
    binary::reader r(path);
    r.expect_magic("GMLB");
    const auto version = r.u32();
    if (version != checkpoint_version) {
        throw validation_error(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    const auto count = r.u32();
    named_tensors out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        auto name = r.str();
        const auto rank = r.u32();
        shape_t shape(rank);
        for (auto& d : shape) d = r.u32();
        std::vector<double> values(shape_numel(shape));
        for (auto& v : values) v = r.f64();
        out.emplace_back(std::move(name), tensor::from(std::move(shape), std::move(values), true));
    }
    if (!r.at_end()) throw validation_error(path + ": trailing bytes after checkpoint payload");
    return out;
}

} // namespace gaitml
