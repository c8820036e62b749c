#include "akn/dataset.hpp"
#include "akn/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace akn {

std::array<int, 2> motion_direction(std::size_t label)
{
    static constexpr std::array<std::array<int, 2>, 8> dirs{{
        {-1, 0}, {1, 0}, {0, -1}, {0, 1}, {-1, -1}, {1, -1}, {-1, 1}, {1, 1},
    }};
    return dirs.at(label);
}

void check_geometry(const DatasetConfig& cfg)
{
    if (cfg.classes != 4 && cfg.classes != 8)
        throw std::invalid_argument("synthetic dataset supports 4 or 8 classes");
    if (cfg.length == 0 || cfg.min_side == 0 || cfg.min_side > cfg.max_side || cfg.min_speed > cfg.max_speed)
        throw std::invalid_argument("invalid synthetic dataset geometry");
    const std::size_t travel = cfg.max_speed * (cfg.length - 1);
    if (cfg.max_side + travel > std::min(cfg.height, cfg.width))
        throw std::invalid_argument("frame too small for the object trajectory");
}

Clip generate_clip(const DatasetConfig& cfg, std::size_t index)
{
    check_geometry(cfg);

    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    std::mt19937_64 rng(seq);
    auto uniform_int = [&](std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);

    const std::size_t t_len = cfg.length, h = cfg.height, w = cfg.width, plane = h * w;
    Clip clip;
    clip.label = static_cast<std::uint32_t>(uniform_int(0, cfg.classes - 1));
    const auto dir = motion_direction(clip.label);
    const std::size_t side = uniform_int(cfg.min_side, cfg.max_side);
    const std::size_t speed = uniform_int(cfg.min_speed, cfg.max_speed);
    const std::size_t span = speed * (t_len - 1);

    // Start so the whole trajectory stays inside the frame.
    auto start = [&](int d, std::size_t extent) -> std::size_t {
        const std::size_t room = extent - side - (d != 0 ? span : 0);
        const std::size_t s = uniform_int(0, room);
        return d < 0 ? s + span : s;
    };
    const std::size_t x0 = start(dir[0], w);
    const std::size_t y0 = start(dir[1], h);

    // Static texture: a few random low-frequency gratings per channel.
    std::array<std::vector<float>, 3> texture;
    for (auto& tex : texture) {
        tex.assign(plane, 0.0f);
        for (int k = 0; k < 3; ++k) {
            const float fx = 0.2f + 0.8f * unit(rng), fy = 0.2f + 0.8f * unit(rng), ph = 6.2831853f * unit(rng);
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    tex[y * w + x] += std::sin(fx * x + fy * y + ph) / 3.0f;
        }
        for (auto& v : tex)
            v = 0.25f + 0.15f * v + 0.1f * (unit(rng) - 0.5f);
    }
    std::array<float, 3> color{};
    for (auto& c : color)
        c = 0.6f + 0.4f * unit(rng);

    std::normal_distribution<float> noise(0.0f, static_cast<float>(cfg.noise));
    clip.frames = Tensor<float>({t_len, 3, h, w});
    clip.mask.assign(t_len * plane, 0);
    for (std::size_t t = 0; t < t_len; ++t) {
        const long ox = static_cast<long>(x0) + dir[0] * static_cast<long>(speed * t);
        const long oy = static_cast<long>(y0) + dir[1] * static_cast<long>(speed * t);
        for (std::size_t y = 0; y < side; ++y)
            for (std::size_t x = 0; x < side; ++x)
                clip.mask[t * plane + (oy + y) * w + (ox + x)] = 1;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t p = 0; p < plane; ++p) {
                float v = clip.mask[t * plane + p] ? color[c] : texture[c][p];
                if (cfg.noise > 0)
                    v += noise(rng);
                clip.frames[(t * 3 + c) * plane + p] = std::clamp(v, 0.0f, 1.0f);
            }
    }
    return clip;
}

std::vector<Clip> gen_dataset(const DatasetConfig& cfg)
{
    std::vector<Clip> out;
    out.reserve(cfg.count);
    for (std::size_t i = 0; i < cfg.count; ++i)
        out.push_back(generate_clip(cfg, cfg.first_index + i));
    return out;
}

void write_clip(const std::filesystem::path& path, const Clip& clip)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open " + path.string() + " for writing");
    os.write("AKVD", 4);
    io::put<std::uint32_t>(os, 1);
    for (std::size_t d : clip.frames.dims())
        io::put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    io::put<std::uint32_t>(os, clip.label);
    io::put<std::uint8_t>(os, clip.mask.empty() ? 0 : 1);
    os.write(reinterpret_cast<const char*>(clip.frames.ptr()), static_cast<std::streamsize>(clip.frames.size() * 4));
    if (!clip.mask.empty())
        os.write(reinterpret_cast<const char*>(clip.mask.data()), static_cast<std::streamsize>(clip.mask.size()));
    if (!os)
        throw IoError("write failed for " + path.string());
}

Clip read_clip(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open " + path.string());
    try {
        io::expect_magic(is, "AKVD");
        const auto version = io::get<std::uint32_t>(is);
        if (version != 1)
            throw IoError("unsupported clip version " + std::to_string(version));
        Dims dims(4);
        for (auto& d : dims)
            d = io::get<std::uint32_t>(is);
        Clip clip;
        clip.label = io::get<std::uint32_t>(is);
        const auto has_mask = io::get<std::uint8_t>(is);
        std::vector<float> data(dims_product(dims));
        if (!is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * 4)))
            throw IoError("truncated frame data");
        clip.frames = Tensor<float>(dims, std::move(data));
        if (has_mask) {
            clip.mask.resize(dims[0] * dims[2] * dims[3]);
            if (!is.read(reinterpret_cast<char*>(clip.mask.data()), static_cast<std::streamsize>(clip.mask.size())))
                throw IoError("truncated mask data");
        }
        return clip;
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    } catch (const ShapeError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_dataset(const std::filesystem::path& dir, const std::vector<Clip>& clips)
{
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < clips.size(); ++i) {
        std::ostringstream name;
        name << "clip_" << std::setw(5) << std::setfill('0') << i << ".akvd";
        write_clip(dir / name.str(), clips[i]);
    }
}

std::vector<Clip> read_dataset(const std::filesystem::path& dir)
{
    if (!std::filesystem::is_directory(dir))
        throw IoError("dataset directory " + dir.string() + " does not exist");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".akvd")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<Clip> clips;
    clips.reserve(files.size());
    for (const auto& f : files)
        clips.push_back(read_clip(f));
    return clips;
}

} // namespace akn
