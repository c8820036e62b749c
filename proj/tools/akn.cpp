// akn: dataset generation, training, evaluation, cost analysis and keypoint
// visualization for the action-keypoint network.

#include "akn/binary_io.hpp"
#include "akn/checkpoint.hpp"
#include "akn/config.hpp"
#include "akn/cost_model.hpp"
#include "akn/dataset.hpp"
#include "akn/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

constexpr int exit_config = 2;
constexpr int exit_io = 3;

using namespace akn;

std::filesystem::path split_dir(const std::filesystem::path& root, const char* name)
{
    const auto sub = root / name;
    return std::filesystem::is_directory(sub) ? sub : root;
}

int cmd_gen(const std::string& out, const std::string& config_path, std::optional<std::uint64_t> seed)
{
    RunConfig cfg = load_config(config_path);
    if (seed)
        cfg.data.seed = *seed;
    DatasetConfig d = cfg.data;
    d.count = cfg.train_clips;
    d.first_index = 0;
    write_dataset(std::filesystem::path(out) / "train", gen_dataset(d));
    d.count = cfg.val_clips;
    d.first_index = cfg.train_clips;
    write_dataset(std::filesystem::path(out) / "val", gen_dataset(d));
    std::cout << "wrote " << cfg.train_clips << " train and " << cfg.val_clips << " val clips to " << out << '\n';
    return 0;
}

int cmd_train(const std::string& data, const std::string& config_path, const std::string& out, bool quiet)
{
    const RunConfig cfg = load_config(config_path);
    const auto train_set = read_dataset(split_dir(data, "train"));
    const auto val_dir = std::filesystem::path(data) / "val";
    const auto val_set = std::filesystem::is_directory(val_dir) ? read_dataset(val_dir) : std::vector<Clip>{};
    if (train_set.empty())
        throw IoError("no clips found under " + data);
    if (cfg.train.stage == 2 && cfg.train.init_ckpt.empty())
        throw ConfigError("stage 2 needs a stage-1 checkpoint (set init_ckpt)");
    if (cfg.train.stage == 2 && !std::filesystem::exists(cfg.train.init_ckpt))
        throw IoError("stage-1 checkpoint " + cfg.train.init_ckpt + " not found");

    std::filesystem::create_directories(out);
    std::ofstream log(std::filesystem::path(out) / "metrics.log");
    if (!log)
        throw IoError("cannot write metrics log under " + out);
    auto progress = [&](const EpochMetrics& m) {
        if (!quiet)
            std::cerr << format_epoch(m, cfg.train.stage) << '\n';
    };
    const auto result = train(cfg, train_set, val_set, log, progress);
    save_model(out, result.model);
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, std::size_t threads)
{
    const Model model = load_model(ckpt);
    const auto clips = read_dataset(split_dir(data, "val"));
    const auto m = evaluate(model, clips, threads);
    std::cout << std::fixed << std::setprecision(6) << "clips\t" << m.clips << "\naccuracy\t" << m.accuracy
              << "\nloss\t" << m.loss << '\n';
    if (model.stage() == 2) {
        std::cout << "energy\t" << m.energy << "\nin_mask\t" << m.in_mask << "\nchance\t" << m.chance
                  << "\npoints_per_frame";
        for (double c : m.points_per_frame)
            std::cout << '\t' << c;
        std::cout << '\n';
    }
    return 0;
}

int cmd_analyze(const std::string& config_path, bool do_sweep, const std::vector<double>& alphas,
                const std::string& out)
{
    const RunConfig cfg = load_config(config_path);
    const CostInput input{cfg.data.length, cfg.data.height, cfg.data.width};
    std::ostringstream table;
    if (do_sweep)
        write_sweep_table(table, sweep(cfg.model, input, {StageTag::s2, StageTag::s3, StageTag::s4}, alphas));
    else
        write_cost_table(table, network_cost(cfg.model, input));
    std::cout << table.str();
    if (!out.empty()) {
        std::ofstream os(out);
        if (!os || !(os << table.str()))
            throw IoError("cannot write " + out);
    }
    return 0;
}

int cmd_viz(const std::string& ckpt, const std::string& clip_path, const std::string& out)
{
    const Model model = load_model(ckpt);
    visualize(model, read_clip(clip_path), out);
    std::cout << "wrote " << model.config.data.length << " frames to " << out << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"action-keypoint network toolkit"};
    app.require_subcommand(1);

    std::string out, config, data, ckpt, clip, table_out;
    std::optional<std::uint64_t> seed;
    bool quiet = false, do_sweep = false;
    std::size_t threads = 1;
    std::vector<double> alphas{0.1, 0.3, 0.5};

    auto* gen = app.add_subcommand("gen", "generate the synthetic motion dataset (train/ and val/)");
    gen->add_option("--out", out, "output directory")->required();
    gen->add_option("--config", config, "config file")->required();
    gen->add_option("--seed", seed, "override the config seed");

    auto* tr = app.add_subcommand("train", "train stage 1 or stage 2");
    tr->add_option("--data", data, "dataset directory")->required();
    tr->add_option("--config", config, "config file")->required();
    tr->add_option("--out", out, "output directory")->required();
    tr->add_flag("--quiet", quiet, "no per-epoch progress on stderr");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    ev->add_option("--ckpt", ckpt, "checkpoint file")->required();
    ev->add_option("--data", data, "dataset directory")->required();
    ev->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

    auto* an = app.add_subcommand("analyze", "parameter and FLOPs accounting");
    an->add_option("--config", config, "config file")->required();
    an->add_flag("--sweep", do_sweep, "sweep separating layer and alpha");
    an->add_option("--alphas", alphas, "alpha values for the sweep")->delimiter(',');
    an->add_option("--out", table_out, "also write the table here");

    auto* vz = app.add_subcommand("viz", "render keypoints and heatmaps for one clip");
    vz->add_option("--ckpt", ckpt, "checkpoint file")->required();
    vz->add_option("--clip", clip, "clip file (.akvd)")->required();
    vz->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_config;
    }

    try {
        if (gen->parsed())
            return cmd_gen(out, config, seed);
        if (tr->parsed())
            return cmd_train(data, config, out, quiet);
        if (ev->parsed())
            return cmd_eval(ckpt, data, threads);
        if (an->parsed())
            return cmd_analyze(config, do_sweep, alphas, table_out);
        if (vz->parsed())
            return cmd_viz(ckpt, clip, out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return exit_io;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return exit_io;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
