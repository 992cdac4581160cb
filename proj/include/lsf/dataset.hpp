#pragma once

// Synthetic long/short exposure pairs and their on-disk layout.
//
// A dataset directory holds `manifest.txt` plus three tensor files per sample:
//   sample_NNNNN_long.lsft   (1,4,H/2,W/2) packed long raw, brightness-matched for the mode
//   sample_NNNNN_short.lsft  (1,4,H/2,W/2) packed short raw, brightness-matched for the mode
//   sample_NNNNN_gt.lsft     (1,3,H,W) post-processed target
// The manifest is `key = value` header lines followed by one `sample key=value ...`
// record per sample carrying every parameter needed to regenerate it.

#include "lsf/config.hpp"
#include "lsf/degrade.hpp"
#include "lsf/io.hpp"
#include "lsf/isp.hpp"
#include "lsf/nn/layers.hpp"
#include "lsf/scene.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace lsf {

/// Generation parameters of one sample; sufficient to regenerate it bit-exactly.
struct SampleMeta {
    int index = 0;
    std::uint64_t scene_seed = 0;
    std::string scene_file; // empty for procedural scenes
    int light_sources = 0;
    double scale_s = 1.0;
    double sigma_s = 0, sigma_r = 0;
    double c_red = 1, c_blue = 1;
    std::uint64_t trajectory_seed = 0;
    int frames = 1;
    int skip_k = 0;
    std::uint64_t noise_seed = 0;

    friend bool operator==(const SampleMeta&, const SampleMeta&) = default;
};

template <typename T>
struct SamplePair {
    Tensor<T> long_in;  // packed, brightness-matched
    Tensor<T> short_in; // packed, brightness-matched (may exceed 1)
    Tensor<T> target;   // post-processed ground truth
    SampleMeta meta;
};

inline std::vector<std::filesystem::path> list_scene_files(const std::filesystem::path& dir)
{
    std::vector<std::filesystem::path> files;
    if (!std::filesystem::is_directory(dir)) throw IoError("scene_dir '" + dir.string() + "' is not a directory");
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".ppm" || ext == ".pnm" || ext == ".lsft")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("scene_dir '" + dir.string() + "' has no .ppm or .lsft scenes");
    return files;
}

/// Draws the parameters of sample `index` from the stream split_seed(cfg.seed, index).
inline SampleMeta sample_meta(const RunConfig& cfg, int index, const std::vector<std::filesystem::path>& scene_files = {})
{
    Rng rng(split_seed(cfg.seed, static_cast<std::uint64_t>(index)));
    SampleMeta m;
    m.index = index;
    m.scene_seed = rng();
    if (cfg.scene_source == SceneSource::files) m.scene_file = scene_files.at(index % scene_files.size()).string();
    m.light_sources = std::uniform_int_distribution<int>(0, std::max(0, cfg.max_light_sources))(rng);
    m.scale_s = sample_scale(rng);
    m.sigma_s = cfg.sigma_s_grid[std::uniform_int_distribution<std::size_t>(0, cfg.sigma_s_grid.size() - 1)(rng)];
    m.sigma_r = cfg.sigma_r_grid[std::uniform_int_distribution<std::size_t>(0, cfg.sigma_r_grid.size() - 1)(rng)];
    const auto cd = ColorDistortion::sample(rng);
    m.c_red = cd.c_red;
    m.c_blue = cd.c_blue;
    m.trajectory_seed = rng();
    m.frames = cfg.frames;
    m.noise_seed = rng();
    return m;
}

/// Scene before exposure scaling, at the configured size.
template <typename T>
IrradianceImage<T> scene_for(const RunConfig& cfg, const SampleMeta& m)
{
    if (m.scene_file.empty()) {
        const SceneParams sp{m.scale_s, m.scene_seed, m.light_sources, cfg.light_radius};
        return procedural_scene<T>(sp, cfg.height, cfg.width);
    }
    auto img = load_irradiance<T>(m.scene_file);
    if (img.height() < cfg.height || img.width() < cfg.width)
        throw DimensionError("scene '" + m.scene_file + "' is smaller than the configured size");
    IrradianceImage<T> crop(cfg.height, cfg.width);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < cfg.height; ++y)
            for (int x = 0; x < cfg.width; ++x) crop.at(c, y, x) = img.at(c, y, x);
    return crop;
}

/// Runs the full synthesis for one sample. `meta.skip_k` is filled from the trajectory.
template <typename T>
SamplePair<T> make_pair(const RunConfig& cfg, SampleMeta meta)
{
    const auto scene = scene_for<double>(cfg, meta);
    const auto scaled = apply_scale(scene, meta.scale_s);
    const auto k = Intrinsics::default_for(cfg.height, cfg.width);
    const auto traj = gen_trajectory(meta.trajectory_seed, meta.frames, k, 1.0);
    meta.skip_k = traj.skip_k;
    const auto flows = trajectory_to_flows(traj, cfg.height, cfg.width, k);
    const NoiseParams np{meta.sigma_s, meta.sigma_r, cfg.exposure_ratio};
    const ColorDistortion cd{meta.c_red, meta.c_blue};

    const auto long_raw = make_long_exposure(scaled, flows, traj.skip_k, np, split_seed(meta.noise_seed, 1));
    const auto short_raw = make_short_exposure(scaled, cfg.exposure_ratio, cd, np, split_seed(meta.noise_seed, 2));

    const double s = cfg.mode == ToneMode::mulaw ? meta.scale_s : 1.0;
    SamplePair<T> pair;
    pair.long_in = scale_long_for_input(pack_rggb(long_raw).tensor(), s).template cast<T>();
    pair.short_in = scale_short_for_input(pack_rggb(short_raw).tensor(), cfg.exposure_ratio, s).template cast<T>();
    const IspConfig isp = cfg.isp();
    pair.target = make_ground_truth(cfg.mode == ToneMode::gamma ? scaled : scene, isp).tensor().template cast<T>();
    pair.meta = meta;
    return pair;
}

// ---- network input preparation ---------------------------------------------------

enum class InputKind { raw, srgb };

/// White-balanced packed raw (raw), or the Malvar + ISP sRGB rendering
/// pixel-unshuffled to 12 channels (srgb ablation).
template <typename T>
Tensor<T> network_input(const Tensor<T>& packed, const IspConfig& isp, InputKind kind)
{
    Tensor<T> wb = packed;
    white_balance_packed(wb, isp.wb_gains);
    if (kind == InputKind::raw) return wb;
    IspConfig gamma_isp = isp;
    gamma_isp.mode = ToneMode::gamma;
    std::vector<Tensor<T>> out;
    for (int n = 0; n < wb.n(); ++n) {
        const auto raw = unpack_rggb(PackedRaw<T>(take_sample(wb, n)));
        const auto rgb = demosaic_malvar(raw);
        out.push_back(nn::pixel_unshuffle(post_process(rgb.tensor(), gamma_isp), 2));
    }
    return stack_samples<T>(out);
}

// ---- manifest -----------------------------------------------------------------------

inline std::string format_double(double v)
{
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline std::string sample_record(const SampleMeta& m)
{
    std::ostringstream os;
    os << "sample index=" << m.index << " scene_seed=" << m.scene_seed << " light_sources=" << m.light_sources
       << " s=" << format_double(m.scale_s) << " sigma_s=" << format_double(m.sigma_s)
       << " sigma_r=" << format_double(m.sigma_r) << " c_red=" << format_double(m.c_red)
       << " c_blue=" << format_double(m.c_blue) << " trajectory_seed=" << m.trajectory_seed << " frames=" << m.frames
       << " skip_k=" << m.skip_k << " noise_seed=" << m.noise_seed;
    if (!m.scene_file.empty()) os << " scene_file=" << m.scene_file;
    return os.str();
}

inline SampleMeta parse_sample_record(const std::string& line)
{
    std::istringstream in(line);
    std::string tok;
    in >> tok;
    if (tok != "sample") throw IoError("manifest: expected a sample record");
    std::map<std::string, std::string> kv;
    while (in >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw IoError("manifest: malformed field '" + tok + "'");
        kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    auto get = [&](const char* k) -> const std::string& {
        const auto it = kv.find(k);
        if (it == kv.end()) throw IoError(std::string("manifest: sample record lacks ") + k);
        return it->second;
    };
    SampleMeta m;
    m.index = std::stoi(get("index"));
    m.scene_seed = std::stoull(get("scene_seed"));
    m.light_sources = std::stoi(get("light_sources"));
    m.scale_s = std::stod(get("s"));
    m.sigma_s = std::stod(get("sigma_s"));
    m.sigma_r = std::stod(get("sigma_r"));
    m.c_red = std::stod(get("c_red"));
    m.c_blue = std::stod(get("c_blue"));
    m.trajectory_seed = std::stoull(get("trajectory_seed"));
    m.frames = std::stoi(get("frames"));
    m.skip_k = std::stoi(get("skip_k"));
    m.noise_seed = std::stoull(get("noise_seed"));
    if (kv.count("scene_file")) m.scene_file = kv["scene_file"];
    return m;
}

/// Header settings that determine how samples were synthesised.
inline std::string manifest_header(const RunConfig& cfg)
{
    std::ostringstream os;
    os << "# lsf synthetic dataset\n"
       << "format = 1\n"
       << "mode = " << to_string(cfg.mode) << '\n'
       << "scene_count = " << cfg.scene_count << '\n'
       << "height = " << cfg.height << '\n'
       << "width = " << cfg.width << '\n'
       << "frames = " << cfg.frames << '\n'
       << "max_light_sources = " << cfg.max_light_sources << '\n'
       << "light_radius = " << format_double(cfg.light_radius) << '\n'
       << "sigma_s = " << config_detail::join(cfg.sigma_s_grid) << '\n'
       << "sigma_r = " << config_detail::join(cfg.sigma_r_grid) << '\n'
       << "exposure_ratio = " << format_double(cfg.exposure_ratio) << '\n'
       << "wb_gains = " << config_detail::join({cfg.wb_gains[0], cfg.wb_gains[1], cfg.wb_gains[2]}) << '\n'
       << "seed = " << cfg.seed << '\n';
    return os.str();
}

struct Manifest {
    RunConfig config;
    std::vector<SampleMeta> samples;
};

inline Manifest read_manifest(const std::filesystem::path& dir)
{
    const auto path = dir / "manifest.txt";
    if (!std::filesystem::exists(path)) throw IoError("no manifest.txt in '" + dir.string() + "'");
    std::istringstream in(read_text_file(path));
    std::string header, line;
    Manifest m;
    while (std::getline(in, line)) {
        if (line.rfind("sample ", 0) == 0) m.samples.push_back(parse_sample_record(line));
        else if (line.rfind("format", 0) != 0) header += line + '\n';
    }
    m.config = parse_config(header);
    return m;
}

inline std::filesystem::path sample_path(const std::filesystem::path& dir, int index, const char* part)
{
    char name[64];
    std::snprintf(name, sizeof name, "sample_%05d_%s.lsft", index, part);
    return dir / name;
}

template <typename T>
SamplePair<T> load_sample(const std::filesystem::path& dir, const SampleMeta& meta)
{
    return {load_tensor<T>(sample_path(dir, meta.index, "long")), load_tensor<T>(sample_path(dir, meta.index, "short")),
            load_tensor<T>(sample_path(dir, meta.index, "gt")), meta};
}

/// Writes cfg.scene_count samples plus the manifest into `dir`.
inline Manifest generate_dataset(const RunConfig& cfg, const std::filesystem::path& dir)
{
    cfg.validate();
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> files;
    if (cfg.scene_source == SceneSource::files) files = list_scene_files(cfg.scene_dir);
    Manifest man{cfg, {}};
    for (int i = 0; i < cfg.scene_count; ++i) {
        const auto pair = make_pair<float>(cfg, sample_meta(cfg, i, files));
        save_tensor(sample_path(dir, i, "long"), pair.long_in);
        save_tensor(sample_path(dir, i, "short"), pair.short_in);
        save_tensor(sample_path(dir, i, "gt"), pair.target);
        man.samples.push_back(pair.meta);
    }
    std::ofstream f(dir / "manifest.txt", std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write manifest in '" + dir.string() + "'");
    f << manifest_header(cfg);
    for (const auto& m : man.samples) f << sample_record(m) << '\n';
    if (!f) throw IoError("manifest write failed");
    return man;
}

} // namespace lsf
