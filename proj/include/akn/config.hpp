#pragma once

#include "akn/dataset.hpp"
#include "akn/model.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace akn {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    int stage = 1;
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double clip_norm = 10.0;  // global gradient-norm clip per batch; 0 disables
    std::size_t epochs = 30;
    std::vector<std::size_t> decay_epochs{20, 40};
    std::size_t batch = 16;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    bool freeze_front = false;
    std::string init_ckpt;  // stage-1 checkpoint for stage 2
};

// Everything a `key = value` file can set.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    DatasetConfig data;
    std::size_t train_clips = 2000;
    std::size_t val_clips = 500;

    // Dataset geometry shared with the model.
    std::size_t clip_len() const { return data.length; }
};

// `key = value` lines, `#` comments, blank lines ignored. Keys are checked
// against the known set; values are validated.
std::map<std::string, std::string> parse_key_values(std::istream& is);

RunConfig parse_config(std::istream& is);
RunConfig load_config(const std::filesystem::path& path);

// Cross-field checks (model shape, frame size); throws ConfigError.
void validate_config(const RunConfig& cfg);

// Applies one key; throws ConfigError on an unknown key or a bad value.
void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value);

// Canonical text form; parse_config(format_config(c)) reproduces c.
std::string format_config(const RunConfig& cfg);

} // namespace akn
