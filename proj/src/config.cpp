#include "akn/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace akn {

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* what)
{
    throw ConfigError("config key '" + key + "': " + what + " (got '" + value + "')");
}

std::uint64_t as_uint(const std::string& key, const std::string& v)
{
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        bad(key, v, "expected a non-negative integer");
    return out;
}

std::size_t as_positive(const std::string& key, const std::string& v)
{
    const auto n = as_uint(key, v);
    if (n == 0)
        bad(key, v, "must be positive");
    return static_cast<std::size_t>(n);
}

double as_double(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size())
            bad(key, v, "expected a number");
        return d;
    } catch (const std::logic_error&) {
        bad(key, v, "expected a number");
    }
}

bool as_bool(const std::string& key, const std::string& v)
{
    if (v == "1" || v == "true" || v == "on" || v == "yes")
        return true;
    if (v == "0" || v == "false" || v == "off" || v == "no")
        return false;
    bad(key, v, "expected a boolean (true/false, on/off, 1/0)");
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

std::string number_text(double d)
{
    std::ostringstream os;
    os.precision(17);
    os << d;
    return os.str();
}

} // namespace

std::map<std::string, std::string> parse_key_values(std::istream& is)
{
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        const std::string t = trim(line);
        if (t.empty())
            continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        std::string key = trim(std::string_view(t).substr(0, eq));
        std::string value = trim(std::string_view(t).substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
        if (out.count(key))
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        out.emplace(std::move(key), std::move(value));
    }
    return out;
}

void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value)
{
    auto& m = cfg.model;
    auto& t = cfg.train;
    auto& d = cfg.data;
    if (key == "stage") {
        const auto s = as_uint(key, value);
        if (s != 1 && s != 2)
            bad(key, value, "must be 1 or 2");
        t.stage = static_cast<int>(s);
    } else if (key == "split") {
        try {
            m.split = parse_stage(value);
        } catch (const std::invalid_argument&) {
            bad(key, value, "expected s2, s3 or s4");
        }
        if (m.split != StageTag::s2 && m.split != StageTag::s3 && m.split != StageTag::s4)
            bad(key, value, "expected s2, s3 or s4");
    } else if (key == "alpha") {
        m.alpha = as_double(key, value);
        if (!(m.alpha > 0.0 && m.alpha <= 1.0))
            bad(key, value, "must lie in (0, 1]");
    } else if (key == "tau") {
        m.tau = as_double(key, value);
        if (m.tau > 0.0 && m.tau <= 1.0)
            bad(key, value, "must exceed 1 (or be <= 0 for H + W)");
    } else if (key == "rank") {
        m.rank = as_bool(key, value);
    } else if (key == "reg") {
        m.reg = as_bool(key, value);
    } else if (key == "transform") {
        m.transform = as_bool(key, value);
    } else if (key == "concat") {
        m.concat = as_bool(key, value);
    } else if (key == "keep_coords") {
        m.keep_coord_channels = as_bool(key, value);
    } else if (key == "reduction") {
        m.reduction = as_positive(key, value);
    } else if (key == "point_stride") {
        if (value == "area")
            m.point_stride = PointStride::area;
        else if (value == "linear")
            m.point_stride = PointStride::linear;
        else
            bad(key, value, "expected area or linear");
    } else if (key == "compact_axis") {
        if (value == "width")
            m.compact_axis = CompactAxis::width;
        else if (value == "height")
            m.compact_axis = CompactAxis::height;
        else
            bad(key, value, "expected width or height");
    } else if (key == "lr") {
        t.lr = as_double(key, value);
        if (!(t.lr > 0.0))
            bad(key, value, "must be positive");
    } else if (key == "momentum") {
        t.momentum = as_double(key, value);
        if (!(t.momentum >= 0.0 && t.momentum < 1.0))
            bad(key, value, "must lie in [0, 1)");
    } else if (key == "weight_decay") {
        t.weight_decay = as_double(key, value);
        if (!(t.weight_decay >= 0.0))
            bad(key, value, "must be non-negative");
    } else if (key == "clip_norm") {
        t.clip_norm = as_double(key, value);
        if (!(t.clip_norm >= 0.0))
            bad(key, value, "must be non-negative");
    } else if (key == "epochs") {
        t.epochs = as_positive(key, value);
    } else if (key == "decay_epochs") {
        t.decay_epochs.clear();
        std::stringstream ss(value);
        std::string item;
        while (value != "none" && std::getline(ss, item, ','))
            if (!trim(item).empty())
                t.decay_epochs.push_back(as_positive(key, trim(item)));
    } else if (key == "batch") {
        t.batch = as_positive(key, value);
    } else if (key == "seed") {
        t.seed = as_uint(key, value);
        d.seed = t.seed;
    } else if (key == "threads") {
        t.threads = as_positive(key, value);
    } else if (key == "freeze_front") {
        t.freeze_front = as_bool(key, value);
    } else if (key == "init_ckpt") {
        t.init_ckpt = value;
    } else if (key == "classes") {
        const auto k = as_uint(key, value);
        if (k != 4 && k != 8)
            bad(key, value, "the synthetic benchmark has 4 or 8 classes");
        d.classes = static_cast<std::size_t>(k);
        m.backbone.num_classes = d.classes;
    } else if (key == "clip_len") {
        d.length = as_positive(key, value);
    } else if (key == "height") {
        d.height = as_positive(key, value);
    } else if (key == "width") {
        d.width = as_positive(key, value);
    } else if (key == "noise") {
        d.noise = as_double(key, value);
        if (!(d.noise >= 0.0))
            bad(key, value, "must be non-negative");
    } else if (key == "train_clips") {
        cfg.train_clips = as_positive(key, value);
    } else if (key == "val_clips") {
        cfg.val_clips = as_positive(key, value);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

void validate_config(const RunConfig& cfg)
{
    try {
        check_geometry(cfg.data);
        const ModelLayout layout(cfg.model);
        output_extent(layout.backbone.layers, layout.backbone.in_channels, cfg.data.height, cfg.data.width);
        if (layout.split_channels % cfg.model.reduction != 0)
            throw std::invalid_argument("reduction " + std::to_string(cfg.model.reduction) +
                                        " does not divide the separating-layer width " +
                                        std::to_string(layout.split_channels));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
}

RunConfig parse_config(std::istream& is)
{
    RunConfig cfg;
    for (const auto& [k, v] : parse_key_values(is))
        apply_config_key(cfg, k, v);
    validate_config(cfg);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is)
        throw ConfigError("cannot read config " + path.string());
    return parse_config(is);
}

std::string format_config(const RunConfig& c)
{
    const auto& m = c.model;
    const auto& t = c.train;
    const auto& d = c.data;
    std::ostringstream os;
    os << "stage = " << t.stage << '\n'
       << "split = " << stage_name(m.split) << '\n'
       << "alpha = " << number_text(m.alpha) << '\n'
       << "tau = " << number_text(m.tau) << '\n'
       << "rank = " << bool_text(m.rank) << '\n'
       << "reg = " << bool_text(m.reg) << '\n'
       << "transform = " << bool_text(m.transform) << '\n'
       << "concat = " << bool_text(m.concat) << '\n'
       << "keep_coords = " << bool_text(m.keep_coord_channels) << '\n'
       << "reduction = " << m.reduction << '\n'
       << "point_stride = " << (m.point_stride == PointStride::area ? "area" : "linear") << '\n'
       << "compact_axis = " << (m.compact_axis == CompactAxis::width ? "width" : "height") << '\n'
       << "lr = " << number_text(t.lr) << '\n'
       << "momentum = " << number_text(t.momentum) << '\n'
       << "weight_decay = " << number_text(t.weight_decay) << '\n'
       << "clip_norm = " << number_text(t.clip_norm) << '\n'
       << "epochs = " << t.epochs << '\n';
    os << "decay_epochs = ";
    for (std::size_t i = 0; i < t.decay_epochs.size(); ++i)
        os << (i ? "," : "") << t.decay_epochs[i];
    os << (t.decay_epochs.empty() ? "none\n" : "\n");
    os << "batch = " << t.batch << '\n'
       << "seed = " << t.seed << '\n'
       << "threads = " << t.threads << '\n'
       << "freeze_front = " << bool_text(t.freeze_front) << '\n';
    if (!t.init_ckpt.empty())
        os << "init_ckpt = " << t.init_ckpt << '\n';
    os << "classes = " << d.classes << '\n'
       << "clip_len = " << d.length << '\n'
       << "height = " << d.height << '\n'
       << "width = " << d.width << '\n'
       << "noise = " << number_text(d.noise) << '\n'
       << "train_clips = " << c.train_clips << '\n'
       << "val_clips = " << c.val_clips << '\n';
    return os.str();
}

} // namespace akn
