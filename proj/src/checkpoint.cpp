#include "akn/checkpoint.hpp"
#include "akn/binary_io.hpp"

#include <fstream>
#include <limits>

namespace akn {

void write_checkpoint(std::ostream& os, const Parameters<float>& params)
{
    os.write("AKCK", 4);
    io::put<std::uint32_t>(os, 1);
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& name = params.name(i);
        const auto& t = params.at(i);
        if (name.size() > std::numeric_limits<std::uint16_t>::max())
            throw IoError("parameter name too long: " + name);
        io::put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        io::put<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
        for (std::size_t d : t.dims())
            io::put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
        os.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!os)
        throw IoError("checkpoint write failed");
}

Parameters<float> read_checkpoint(std::istream& is)
{
    io::expect_magic(is, "AKCK");
    const auto version = io::get<std::uint32_t>(is);
    if (version != 1)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    const auto count = io::get<std::uint32_t>(is);
    Parameters<float> params;
    for (std::uint32_t b = 0; b < count; ++b) {
        const auto len = io::get<std::uint16_t>(is);
        std::string name(len, '\0');
        if (!is.read(name.data(), len))
            throw IoError("truncated blob name");
        const auto rank = io::get<std::uint8_t>(is);
        Dims dims(rank);
        for (auto& d : dims)
            d = io::get<std::uint32_t>(is);
        std::vector<float> data(dims_product(dims));
        if (!is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float))))
            throw IoError("truncated payload for " + name);
        try {
            params.add(name, Tensor<float>(dims, std::move(data)));
        } catch (const std::invalid_argument& e) {
            throw IoError(std::string("invalid blob: ") + e.what());
        }
    }
    return params;
}

void save_checkpoint(const std::filesystem::path& path, const Parameters<float>& params)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open " + path.string() + " for writing");
    write_checkpoint(os, params);
}

Parameters<float> load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open checkpoint " + path.string());
    try {
        return read_checkpoint(is);
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

} // namespace akn
