#pragma once

// Two-stage training, evaluation metrics and visualization on synthetic clips.

#include "akn/config.hpp"
#include "akn/dataset.hpp"
#include "akn/model.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace akn {

// A trained (or freshly initialized) network plus the config that shapes it.
struct Model {
    RunConfig config;
    ModelLayout layout;
    Parameters<float> params;

    explicit Model(const RunConfig& cfg);
    int stage() const { return config.train.stage; }
};

// Stage 1: fresh backbone from the seed. Stage 2: needs the stage-1 parameters.
Model init_model(const RunConfig& cfg, const Parameters<float>* stage1 = nullptr);

// Checkpoint file plus a `config.txt` next to it.
void save_model(const std::filesystem::path& dir, const Model& model);
Model load_model(const std::filesystem::path& checkpoint);

struct ClipResult {
    std::vector<float> logits;
    std::size_t predicted = 0;
    LossTerms loss;
    std::optional<PointSet> points;      // stage 2
    std::optional<Tensor<float>> heat;   // stage 2, normalized T x H x W
    Gradients<float> grads;              // filled when requested
};

ClipResult run_clip(const Model& model, const Clip& clip, bool with_grad,
                    const std::unordered_set<std::string>& frozen = {});

struct EvalMetrics {
    std::size_t clips = 0;
    double accuracy = 0.0;
    double loss = 0.0;
    double energy = 0.0;         // mean r_e (stage 2)
    double in_mask = 0.0;        // mean keypoint-in-mask fraction (stage 2, masked clips)
    double chance = 0.0;         // mean object-area fraction at the selection resolution
    std::vector<double> points_per_frame;  // mean count per frame index (stage 2)
};

EvalMetrics evaluate(const Model& model, const std::vector<Clip>& clips, std::size_t threads = 1);

// Nearest-neighbour downsample of one T x H x W mask to T x h x w, sampling
// the input pixel under each output cell centre.
std::vector<std::uint8_t> downsample_mask(const std::vector<std::uint8_t>& mask, std::size_t frames,
                                          std::size_t height, std::size_t width, std::size_t out_h,
                                          std::size_t out_w);

// Fraction of points whose cell is inside the downsampled mask.
double keypoint_in_mask(const PointSet& points, const std::vector<std::uint8_t>& cell_mask);

struct EpochMetrics {
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0, cls = 0.0, aux = 0.0, reg = 0.0;
    double train_acc = 0.0;
    EvalMetrics val;
};

struct TrainResult {
    Model model;
    std::vector<EpochMetrics> epochs;
};

// Optional hook called after each epoch (progress output).
using EpochCallback = std::function<void(const EpochMetrics&)>;

// Writes one metrics line per epoch to `log` (byte-deterministic for a fixed
// config and seed, independent of the thread count).
TrainResult train(const RunConfig& cfg, const std::vector<Clip>& train_set, const std::vector<Clip>& val_set,
                  std::ostream& log, const EpochCallback& on_epoch = {});

std::string format_epoch(const EpochMetrics& m, int stage);

// Per frame: frame_TT.ppm with keypoints marked, heat_TT.pgm, and points.txt.
void visualize(const Model& model, const Clip& clip, const std::filesystem::path& out_dir);

} // namespace akn
