#ifndef EDNO_DATASET_HPP
#define EDNO_DATASET_HPP

#include <filesystem>
#include <fstream>
#include <sstream>

#include "edno/csv.hpp"
#include "edno/scene.hpp"
#include "edno/tensor_file.hpp"

// On-disk dataset layout:
//   <dir>/manifest.tsv            id <tab> split <tab> seed <tab> scale
//   <dir>/scenes/<split>/<id>.edt records gt, lrms, pan (f32)

namespace edno {

struct DatasetGenConfig {
    int n_train = 64, n_val = 8, n_test = 16;
    int hr_size = 128;
    int bands = 4;
    double ratio = 4.0;
    uint64_t seed = 17;
};

struct ManifestEntry {
    std::string id;
    std::string split;
    uint64_t seed = 0;
    double scale = 0;
};

inline std::string sample_path(const std::string& dir, const ManifestEntry& e) {
    return dir + "/scenes/" + e.split + "/" + e.id + ".edt";
}

/// Generate scenes, degrade them and write the dataset directory.
inline std::vector<ManifestEntry> generate_dataset(const std::string& dir,
                                                   const DatasetGenConfig& cfg) {
    namespace fs = std::filesystem;
    std::vector<ManifestEntry> manifest;
    const std::vector<std::pair<std::string, int>> splits = {
        {"train", cfg.n_train}, {"val", cfg.n_val}, {"test", cfg.n_test}};
    uint64_t scene_idx = 0;
    for (const auto& [split, count] : splits) {
        fs::create_directories(dir + "/scenes/" + split);
        for (int i = 0; i < count; ++i, ++scene_idx) {
            SceneSpec spec;
            spec.seed = cfg.seed + scene_idx * 1000003ULL;
            spec.height = spec.width = cfg.hr_size;
            spec.bands = cfg.bands;
            const Grid<float> gt = generate_scene<float>(spec);
            const SamplePair<float> s = wald_degrade(gt, cfg.ratio);
            ManifestEntry e;
            char idbuf[32];
            std::snprintf(idbuf, sizeof idbuf, "%s%03d", split.substr(0, 2).c_str(), i);
            e.id = idbuf;
            e.split = split;
            e.seed = spec.seed;
            e.scale = s.scale;
            write_tensor_file(sample_path(dir, e),
                              {TensorRecord::from_grid("gt", *s.gt),
                               TensorRecord::from_grid("lrms", s.lrms),
                               TensorRecord::from_grid("pan", s.pan)});
            manifest.push_back(std::move(e));
        }
    }
    std::ofstream mf(dir + "/manifest.tsv", std::ios::trunc);
    if (!mf) throw IoError("cannot write manifest in " + dir);
    for (const auto& e : manifest)
        mf << e.id << "\t" << e.split << "\t" << e.seed << "\t" << fmt_num(e.scale) << "\n";
    return manifest;
}

inline std::vector<ManifestEntry> load_manifest(const std::string& dir) {
    std::ifstream is(dir + "/manifest.tsv");
    if (!is) throw IoError("cannot open manifest in " + dir);
    std::vector<ManifestEntry> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        ManifestEntry e;
        if (!(ls >> e.id >> e.split >> e.seed >> e.scale))
            throw IoError("malformed manifest line: " + line);
        out.push_back(std::move(e));
    }
    return out;
}

template <typename T>
SamplePair<T> load_sample(const std::string& dir, const ManifestEntry& e,
                          bool with_gt = true) {
    const auto records = read_tensor_file(sample_path(dir, e));
    const TensorRecord* lr = find_record(records, "lrms");
    const TensorRecord* pan = find_record(records, "pan");
    if (!lr || !pan) throw IoError("sample " + e.id + ": missing lrms/pan records");
    SamplePair<T> s;
    s.lrms = lr->to_grid<T>();
    s.pan = pan->to_grid<T>();
    s.scale = e.scale;
    if (with_gt) {
        const TensorRecord* gt = find_record(records, "gt");
        if (gt) s.gt = gt->to_grid<T>();
    }
    return s;
}

template <typename T>
struct Split {
    std::vector<std::string> ids;
    std::vector<SamplePair<T>> samples;
};

template <typename T>
Split<T> load_split(const std::string& dir, const std::string& split, bool with_gt = true) {
    Split<T> out;
    for (const auto& e : load_manifest(dir)) {
        if (e.split != split) continue;
        out.ids.push_back(e.id);
        out.samples.push_back(load_sample<T>(dir, e, with_gt));
    }
    return out;
}

/// Raw reference scenes of one split (for re-degrading at other scales).
template <typename T>
Split<T> load_split_gt(const std::string& dir, const std::string& split) {
    return load_split<T>(dir, split, true);
}

} // namespace edno

#endif
