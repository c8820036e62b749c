#include "akn/harness.hpp"
#include "akn/binary_io.hpp"
#include "akn/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace akn {

Model::Model(const RunConfig& cfg)
: config(cfg)
, layout(cfg.model)
{
}

Model init_model(const RunConfig& cfg, const Parameters<float>* stage1)
{
    Model m(cfg);
    std::mt19937_64 rng(cfg.train.seed);
    if (cfg.train.stage == 1) {
        m.params = init_stage1<float>(m.layout, rng);
    } else {
        if (!stage1)
            throw ConfigError("stage 2 needs a stage-1 checkpoint (set init_ckpt)");
        m.params = init_stage2<float>(cfg.model, m.layout, *stage1, rng);
    }
    return m;
}

void save_model(const std::filesystem::path& dir, const Model& model)
{
    std::filesystem::create_directories(dir);
    save_checkpoint(dir / "model.akck", model.params);
    std::ofstream os(dir / "config.txt");
    if (!os)
        throw IoError("cannot write " + (dir / "config.txt").string());
    os << format_config(model.config);
}

Model load_model(const std::filesystem::path& checkpoint)
{
    const auto cfg_path = checkpoint.parent_path() / "config.txt";
    if (!std::filesystem::exists(cfg_path))
        throw IoError("missing " + cfg_path.string() + " next to the checkpoint");
    Model m(load_config(cfg_path));
    m.params = load_checkpoint(checkpoint);
    return m;
}

ClipResult run_clip(const Model& model, const Clip& clip, bool with_grad,
                    const std::unordered_set<std::string>& frozen)
{
    const auto& d = model.config.data;
    if (clip.frames.rank() != 4 || clip.length() != d.length || clip.frames.dim(1) != model.layout.backbone.in_channels ||
        clip.height() != d.height || clip.width() != d.width)
        throw ShapeError("clip " + dims_to_string(clip.frames.dims()) + " does not match the model input");
    if (clip.label >= model.layout.backbone.num_classes)
        throw std::invalid_argument("clip label " + std::to_string(clip.label) + " out of range");

    Graph<float> g(&model.params);
    if (!frozen.empty())
        g.freeze(frozen);
    ClipResult out;
    Var logits;
    Var total;
    if (model.stage() == 1) {
        logits = forward_backbone(g, model.layout.backbone, clip.frames);
        total = ops::cross_entropy(g, logits, clip.label);
        out.loss.cls = out.loss.total = g.value(total).item();
    } else {
        auto v = forward_stage2(g, model.config.model, model.layout, clip.frames);
        logits = v.logits;
        auto loss = total_loss<float>(g, v.logits, v.aux_logits, clip.label, model.config.model.reg ? v.energy : Var{});
        total = loss.total;
        out.loss = loss.terms;
        // Logged even when it does not enter the objective.
        out.loss.reg = g.value(v.energy).item();
        out.points = std::move(v.points);
        out.heat = g.value(v.heat);
    }
    const auto& lv = g.value(logits);
    out.logits.assign(lv.ptr(), lv.ptr() + lv.size());
    out.predicted = static_cast<std::size_t>(std::max_element(out.logits.begin(), out.logits.end()) - out.logits.begin());
    if (with_grad)
        out.grads = g.backward(total);
    return out;
}

namespace {

// Run f(i) for i in [0, n) over `threads` workers; results land by index.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& f)
{
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i)
            f(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += threads)
                    f(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool)
        t.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

} // namespace

std::vector<std::uint8_t> downsample_mask(const std::vector<std::uint8_t>& mask, std::size_t frames,
                                          std::size_t height, std::size_t width, std::size_t out_h,
                                          std::size_t out_w)
{
    if (mask.size() != frames * height * width)
        throw ShapeError("mask size does not match its clip");
    std::vector<std::uint8_t> out(frames * out_h * out_w);
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t y = 0; y < out_h; ++y) {
            const std::size_t sy = std::min(height - 1, ((2 * y + 1) * height) / (2 * out_h));
            for (std::size_t x = 0; x < out_w; ++x) {
                const std::size_t sx = std::min(width - 1, ((2 * x + 1) * width) / (2 * out_w));
                out[(t * out_h + y) * out_w + x] = mask[(t * height + sy) * width + sx];
            }
        }
    return out;
}

double keypoint_in_mask(const PointSet& points, const std::vector<std::uint8_t>& cell_mask)
{
    if (points.size() == 0)
        return 0.0;
    std::size_t inside = 0;
    for (std::size_t p : points.positions)
        inside += cell_mask.at(p) ? 1 : 0;
    return static_cast<double>(inside) / static_cast<double>(points.size());
}

EvalMetrics evaluate(const Model& model, const std::vector<Clip>& clips, std::size_t threads)
{
    EvalMetrics m;
    m.clips = clips.size();
    if (clips.empty())
        return m;
    std::vector<ClipResult> results(clips.size());
    parallel_for(clips.size(), threads, [&](std::size_t i) { results[i] = run_clip(model, clips[i], false); });

    std::size_t correct = 0, masked = 0;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        const auto& r = results[i];
        correct += r.predicted == clips[i].label ? 1 : 0;
        m.loss += r.loss.total;
        if (!r.points)
            continue;
        const auto& pts = *r.points;
        m.energy += r.loss.reg;
        if (m.points_per_frame.empty())
            m.points_per_frame.assign(pts.frames, 0.0);
        for (const auto& c : pts.coords)
            m.points_per_frame[c.t] += 1.0;
        if (!clips[i].mask.empty()) {
            const auto cells = downsample_mask(clips[i].mask, clips[i].length(), clips[i].height(), clips[i].width(),
                                               pts.height, pts.width);
            m.in_mask += keypoint_in_mask(pts, cells);
            m.chance += static_cast<double>(std::count(cells.begin(), cells.end(), 1)) /
                        static_cast<double>(cells.size());
            ++masked;
        }
    }
    const double n = static_cast<double>(clips.size());
    m.accuracy = static_cast<double>(correct) / n;
    m.loss /= n;
    m.energy /= n;
    for (auto& c : m.points_per_frame)
        c /= n;
    if (masked) {
        m.in_mask /= static_cast<double>(masked);
        m.chance /= static_cast<double>(masked);
    }
    return m;
}

std::string format_epoch(const EpochMetrics& m, int stage)
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(6) << "epoch=" << m.epoch << " lr=" << m.lr << " loss=" << m.loss
       << " cls=" << m.cls;
    if (stage == 2)
        os << " aux=" << m.aux << " reg=" << m.reg;
    os << " train_acc=" << m.train_acc << " val_loss=" << m.val.loss << " val_acc=" << m.val.accuracy;
    if (stage == 2)
        os << " val_reg=" << m.val.energy << " in_mask=" << m.val.in_mask << " chance=" << m.val.chance;
    return os.str();
}

TrainResult train(const RunConfig& cfg, const std::vector<Clip>& train_set, const std::vector<Clip>& val_set,
                  std::ostream& log, const EpochCallback& on_epoch)
{
    if (train_set.empty())
        throw std::invalid_argument("empty training set");
    const auto& tc = cfg.train;
    std::optional<Parameters<float>> stage1;
    if (tc.stage == 2) {
        if (tc.init_ckpt.empty())
            throw ConfigError("stage 2 needs a stage-1 checkpoint (set init_ckpt)");
        stage1 = load_checkpoint(tc.init_ckpt);
    }
    TrainResult result{init_model(cfg, stage1 ? &*stage1 : nullptr), {}};
    Model& model = result.model;
    auto& params = model.params;

    std::unordered_set<std::string> frozen;
    if (tc.stage == 2 && tc.freeze_front)
        frozen = front_parameter_names(model.layout, params.names());

    std::vector<Tensor<float>> velocity;
    for (std::size_t i = 0; i < params.size(); ++i)
        velocity.emplace_back(params.at(i).dims());

    std::mt19937_64 order_rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
        const auto decays = std::count_if(tc.decay_epochs.begin(), tc.decay_epochs.end(),
                                          [&](std::size_t d) { return epoch > d; });
        const double lr = tc.lr * std::pow(0.1, static_cast<double>(decays));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(order_rng)]);

        EpochMetrics em;
        em.epoch = epoch;
        em.lr = lr;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += tc.batch) {
            const std::size_t count = std::min(tc.batch, order.size() - start);
            std::vector<ClipResult> res(count);
            parallel_for(count, tc.threads,
                         [&](std::size_t k) { res[k] = run_clip(model, train_set[order[start + k]], true, frozen); });

            // Reduce in clip order so the sum does not depend on the thread count.
            std::vector<Tensor<float>> grads(params.size());
            double sq = 0.0;
            const float inv = 1.0f / static_cast<float>(count);
            for (std::size_t p = 0; p < params.size(); ++p) {
                auto& grad = grads[p];
                for (std::size_t k = 0; k < count; ++k) {
                    const auto& g = res[k].grads[p];
                    if (!g)
                        continue;
                    if (grad.empty())
                        grad = *g;
                    else
                        grad += *g;
                }
                for (auto& v : grad.data()) {
                    v *= inv;
                    sq += static_cast<double>(v) * v;
                }
            }
            const double norm = std::sqrt(sq);
            const float clip = (tc.clip_norm > 0.0 && norm > tc.clip_norm) ? static_cast<float>(tc.clip_norm / norm) : 1.0f;
            const float mu = static_cast<float>(tc.momentum), wd = static_cast<float>(tc.weight_decay);
            const float step = static_cast<float>(lr);
            for (std::size_t p = 0; p < params.size(); ++p) {
                const auto& grad = grads[p];
                if (grad.empty())
                    continue;
                auto& w = params.at(p);
                auto& v = velocity[p];
                const bool decay = !params.name(p).ends_with(".bias");
                for (std::size_t j = 0; j < w.size(); ++j) {
                    const float gj = grad[j] * clip + (decay ? wd * w[j] : 0.0f);
                    v[j] = mu * v[j] + gj;
                    w[j] -= step * v[j];
                }
                if (!w.all_finite())
                    throw std::runtime_error("training diverged: parameter " + params.name(p) + " is not finite");
            }
            for (std::size_t k = 0; k < count; ++k) {
                em.loss += res[k].loss.total;
                em.cls += res[k].loss.cls;
                em.aux += res[k].loss.aux;
                em.reg += res[k].loss.reg;
                correct += res[k].predicted == train_set[order[start + k]].label ? 1 : 0;
            }
        }
        const double n = static_cast<double>(train_set.size());
        em.loss /= n;
        em.cls /= n;
        em.aux /= n;
        em.reg /= n;
        em.train_acc = static_cast<double>(correct) / n;
        em.val = evaluate(model, val_set, tc.threads);
        log << format_epoch(em, tc.stage) << '\n';
        log.flush();
        result.epochs.push_back(em);
        if (on_epoch)
            on_epoch(em);
    }
    return result;
}

namespace {

void write_ppm(const std::filesystem::path& path, std::size_t w, std::size_t h, const std::vector<std::uint8_t>& rgb)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot write " + path.string());
    os << "P6\n" << w << ' ' << h << "\n255\n";
    os.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
}

void write_pgm(const std::filesystem::path& path, std::size_t w, std::size_t h, const std::vector<std::uint8_t>& gray)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot write " + path.string());
    os << "P5\n" << w << ' ' << h << "\n255\n";
    os.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
}

std::uint8_t to_byte(float v)
{
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

std::string frame_name(const char* prefix, std::size_t t, const char* ext)
{
    std::ostringstream os;
    os << prefix << std::setw(2) << std::setfill('0') << t << ext;
    return os.str();
}

} // namespace

void visualize(const Model& model, const Clip& clip, const std::filesystem::path& out_dir)
{
    if (model.stage() != 2)
        throw std::invalid_argument("keypoint visualization needs a stage-2 checkpoint");
    const auto r = run_clip(model, clip, false);
    const auto& pts = *r.points;
    const auto& heat = *r.heat;
    std::filesystem::create_directories(out_dir);

    const std::size_t T = clip.length(), H = clip.height(), W = clip.width(), plane = H * W;
    const std::size_t hs = pts.height, ws = pts.width;
    std::vector<std::vector<std::uint8_t>> marked(T);
    for (std::size_t t = 0; t < T; ++t)
        marked[t].assign(plane, 0);
    // A selected cell covers the input pixels whose nearest cell it is.
    for (const auto& c : pts.coords)
        for (std::size_t y = c.y * H / hs; y < (c.y + 1) * H / hs; ++y)
            for (std::size_t x = c.x * W / ws; x < (c.x + 1) * W / ws; ++x)
                marked[c.t][y * W + x] = 1;

    for (std::size_t t = 0; t < T; ++t) {
        std::vector<std::uint8_t> rgb(plane * 3);
        std::vector<std::uint8_t> gray(plane);
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const std::size_t p = y * W + x;
                for (std::size_t ch = 0; ch < 3; ++ch) {
                    float v = clip.frames[(t * 3 + ch) * plane + p];
                    if (marked[t][p])
                        v = ch == 0 ? 0.5f + 0.5f * v : 0.5f * v;  // red tint
                    rgb[p * 3 + ch] = to_byte(v);
                }
                const std::size_t hy = std::min(hs - 1, y * hs / H), hx = std::min(ws - 1, x * ws / W);
                gray[p] = to_byte(heat[(t * hs + hy) * ws + hx]);
            }
        write_ppm(out_dir / frame_name("frame_", t, ".ppm"), W, H, rgb);
        write_pgm(out_dir / frame_name("heat_", t, ".pgm"), W, H, gray);
    }
    std::ofstream dump(out_dir / "points.txt");
    if (!dump)
        throw IoError("cannot write " + (out_dir / "points.txt").string());
    write_point_dump(dump, pts);
}

} // namespace akn
