#pragma once

// Run configuration shared by every CLI subcommand. Config files are plain text,
// one `key = value` per line; '#' starts a comment. Lists are comma separated.

#include "lsf/io.hpp"
#include "lsf/isp.hpp"
#include "lsf/lsfnet.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace lsf {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class SceneSource { procedural, files };

struct RunConfig {
    // data generation
    SceneSource scene_source = SceneSource::procedural;
    std::filesystem::path scene_dir;
    int scene_count = 16;
    int height = 256;
    int width = 256;
    int frames = 16;
    int max_light_sources = 3;
    double light_radius = 3.0;
    std::vector<double> sigma_s_grid{0.005, 0.01, 0.02};
    std::vector<double> sigma_r_grid{0.01, 0.02, 0.04};
    double exposure_ratio = 30.0;
    ToneMode mode = ToneMode::gamma;
    std::uint64_t seed = 0;

    // training
    int patch_size = 256; // raw pixels; packed patches are half this
    int batch_size = 16;
    int epochs = 20;
    double lr = 1e-4;
    int lr_halve_epochs = 10;
    int checkpoint_every = 5;
    LsfConfig net = LsfConfig::full();
    std::array<double, 3> wb_gains{2.0, 1.0, 1.6};

    std::filesystem::path out = "out";

    [[nodiscard]] IspConfig isp() const
    {
        IspConfig c;
        c.wb_gains = wb_gains;
        c.mode = mode;
        return c;
    }

    void validate() const
    {
        if (scene_count < 1) throw ConfigError("scene_count must be >= 1");
        if (height <= 0 || width <= 0 || height % 16 || width % 16) throw ConfigError("height and width must be positive multiples of 16");
        if (patch_size <= 0 || patch_size % 16) throw ConfigError("patch_size must be a positive multiple of 16");
        if (patch_size > height || patch_size > width) throw ConfigError("patch_size exceeds the scene size");
        if (!(exposure_ratio > 1)) throw ConfigError("exposure_ratio must exceed 1");
        if (frames < 1) throw ConfigError("frames must be >= 1");
        if (sigma_s_grid.empty() || sigma_r_grid.empty()) throw ConfigError("noise grids must not be empty");
        if (batch_size < 1 || epochs < 0) throw ConfigError("batch_size must be >= 1 and epochs >= 0");
        if (!(lr > 0)) throw ConfigError("lr must be positive");
        if (scene_source == SceneSource::files && scene_dir.empty()) throw ConfigError("scene_source = files needs scene_dir");
        net.validate();
    }
};

namespace config_detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<double> parse_list(const std::string& v)
{
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(trim(item)));
    return out;
}

inline std::string join(const std::vector<double>& v)
{
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

} // namespace config_detail

/// Apply one `key = value` setting. Unknown keys are an error.
inline void apply_setting(RunConfig& c, const std::string& key, const std::string& value)
{
    using namespace config_detail;
    try {
        if (key == "scene_source") {
            if (value == "procedural") c.scene_source = SceneSource::procedural;
            else if (value == "files") c.scene_source = SceneSource::files;
            else throw ConfigError("scene_source must be procedural or files");
        } else if (key == "scene_dir") c.scene_dir = value;
        else if (key == "scene_count") c.scene_count = std::stoi(value);
        else if (key == "height") c.height = std::stoi(value);
        else if (key == "width") c.width = std::stoi(value);
        else if (key == "frames") c.frames = std::stoi(value);
        else if (key == "max_light_sources") c.max_light_sources = std::stoi(value);
        else if (key == "light_radius") c.light_radius = std::stod(value);
        else if (key == "sigma_s") c.sigma_s_grid = parse_list(value);
        else if (key == "sigma_r") c.sigma_r_grid = parse_list(value);
        else if (key == "exposure_ratio") c.exposure_ratio = std::stod(value);
        else if (key == "mode") c.mode = parse_tone_mode(value);
        else if (key == "seed") c.seed = std::stoull(value);
        else if (key == "patch_size") c.patch_size = std::stoi(value);
        else if (key == "batch_size") c.batch_size = std::stoi(value);
        else if (key == "epochs") c.epochs = std::stoi(value);
        else if (key == "lr") c.lr = std::stod(value);
        else if (key == "lr_halve_epochs") c.lr_halve_epochs = std::stoi(value);
        else if (key == "checkpoint_every") c.checkpoint_every = std::stoi(value);
        else if (key == "channels") {
            const auto v = parse_list(value);
            if (v.size() != num_scales) throw ConfigError("channels needs exactly 4 values");
            for (int i = 0; i < num_scales; ++i) c.net.channels[i] = static_cast<int>(v[i]);
        } else if (key == "wb_gains") {
            const auto v = parse_list(value);
            if (v.size() != 3) throw ConfigError("wb_gains needs exactly 3 values");
            c.wb_gains = {v[0], v[1], v[2]};
        } else if (key == "out") c.out = value;
        else throw ConfigError("unknown config key '" + key + "'");
    } catch (const std::logic_error& e) {
        if (dynamic_cast<const ConfigError*>(&e)) throw;
        throw ConfigError("bad value for '" + key + "': " + value);
    }
}

inline RunConfig parse_config(const std::string& text, RunConfig base = {})
{
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = config_detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        apply_setting(base, config_detail::trim(line.substr(0, eq)), config_detail::trim(line.substr(eq + 1)));
    }
    return base;
}

inline RunConfig load_config(const std::filesystem::path& p) { return parse_config(read_text_file(p)); }

} // namespace lsf
