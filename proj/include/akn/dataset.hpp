#pragma once

#include "akn/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace akn {

// One synthetic clip: T x C x H x W frames in [0,1], a label, and a per-frame
// object mask (T x H x W, row-major, 0/1) that may be empty.
struct Clip {
    Tensor<float> frames;
    std::uint32_t label = 0;
    std::vector<std::uint8_t> mask;

    std::size_t length() const { return frames.dim(0); }
    std::size_t height() const { return frames.dim(2); }
    std::size_t width() const { return frames.dim(3); }
};

struct DatasetConfig {
    std::size_t classes = 4;  // 4: left/right/up/down; 8 adds the diagonals
    std::size_t count = 100;
    std::size_t length = 8;
    std::size_t height = 32;
    std::size_t width = 32;
    double noise = 0.05;  // per-frame pixel noise std
    std::size_t min_side = 6;
    std::size_t max_side = 9;
    std::size_t min_speed = 1;
    std::size_t max_speed = 2;
    std::uint64_t seed = 0;
    std::size_t first_index = 0;  // gen_dataset produces clips first_index, first_index + 1, ...
};

// Throws std::invalid_argument when the object cannot stay in frame.
void check_geometry(const DatasetConfig& cfg);

// Unit motion (dx, dy) per frame for a class; y grows downward.
std::array<int, 2> motion_direction(std::size_t label);

// Clip `index` of the dataset; depends only on (config, index).
Clip generate_clip(const DatasetConfig& cfg, std::size_t index);

std::vector<Clip> gen_dataset(const DatasetConfig& cfg);

// AKVD clip files.
void write_clip(const std::filesystem::path& path, const Clip& clip);
Clip read_clip(const std::filesystem::path& path);

// Writes clip_00000.akvd, ... into `dir`; reads them back in name order.
void write_dataset(const std::filesystem::path& dir, const std::vector<Clip>& clips);
std::vector<Clip> read_dataset(const std::filesystem::path& dir);

} // namespace akn
