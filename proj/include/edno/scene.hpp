#ifndef EDNO_SCENE_HPP
#define EDNO_SCENE_HPP

#include <random>

#include "edno/wald.hpp"

// Synthetic multi-band scenes: a handful of geometric primitive layers with
// sharp edges (phase content) mixed into bands through a non-negative matrix
// with rows summing to one (distinct band statistics, correlated bands).
// Every draw comes from one seeded generator, so a spec is its scene.

namespace edno {

struct SceneSpec {
    uint64_t seed = 0;
    int height = 128, width = 128;
    int bands = 4;

    // content mix: how many instances of each primitive go into its layer
    int n_gradients = 1;
    int n_ellipses = 3;
    int n_rectangles = 3;
    int n_sinusoids = 2;
    int n_noise = 0; // smoothed noise fields; off by default

    static constexpr int kPrimitives = 5;

    // bands x kPrimitives, row-major, rows summing to 1; empty = drawn from seed
    std::vector<double> mixing;
};

namespace scenedetail {

inline double unit(std::mt19937_64& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline void normalize01(std::vector<double>& a) {
    double lo = a[0], hi = a[0];
    for (double v : a) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;
    if (span < 1e-12) {
        for (auto& v : a) v = 0.0;
        return;
    }
    for (auto& v : a) v = (v - lo) / span;
}

} // namespace scenedetail

/// Deterministic HR-MS reference scene in [0, 1].
template <typename T>
Grid<T> generate_scene(const SceneSpec& spec) {
    using scenedetail::unit;
    const int H = spec.height, W = spec.width, B = spec.bands;
    if (H < 4 || W < 4 || B < 1) throw ShapeError("generate_scene: bad dims");
    std::mt19937_64 rng(spec.seed);
    const size_t npx = size_t(H) * W;
    std::vector<std::vector<double>> layers(SceneSpec::kPrimitives,
                                            std::vector<double>(npx, 0.0));

    // layer 0: linear ramps
    for (int i = 0; i < spec.n_gradients; ++i) {
        const double ang = unit(rng) * 2.0 * M_PI;
        const double gx = std::cos(ang) / W, gy = std::sin(ang) / H;
        const double off = unit(rng);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) layers[0][size_t(y) * W + x] += off + gx * x + gy * y;
    }
    if (spec.n_gradients) scenedetail::normalize01(layers[0]);

    // layer 1: filled ellipses, narrow soft rim so edges stay sharp
    for (int i = 0; i < spec.n_ellipses; ++i) {
        const double cy = unit(rng) * H, cx = unit(rng) * W;
        const double ra = 2.0 + unit(rng) * (W / 4.0), rb = 2.0 + unit(rng) * (H / 4.0);
        const double th = unit(rng) * M_PI;
        const double amp = 0.3 + 0.7 * unit(rng);
        const double ct = std::cos(th), st = std::sin(th);
        const double edge = 2.0 / std::min(ra, rb);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double dx = x - cx, dy = y - cy;
                const double u = (ct * dx + st * dy) / ra, v = (-st * dx + ct * dy) / rb;
                const double d = std::sqrt(u * u + v * v);
                const double cov = std::clamp((1.0 - d) / edge, 0.0, 1.0);
                auto& px = layers[1][size_t(y) * W + x];
                px = std::max(px, amp * cov);
            }
    }

    // layer 2: axis-aligned rectangles, hard edges
    for (int i = 0; i < spec.n_rectangles; ++i) {
        int y0 = int(unit(rng) * H), y1 = int(unit(rng) * H);
        int x0 = int(unit(rng) * W), x1 = int(unit(rng) * W);
        if (y0 > y1) std::swap(y0, y1);
        if (x0 > x1) std::swap(x0, x1);
        y1 = std::min(y1 + 2, H - 1); // never degenerate
        x1 = std::min(x1 + 2, W - 1);
        const double amp = 0.3 + 0.7 * unit(rng);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                auto& px = layers[2][size_t(y) * W + x];
                px = std::max(px, amp);
            }
    }

    // layer 3: sinusoidal textures
    if (spec.n_sinusoids) {
        for (int i = 0; i < spec.n_sinusoids; ++i) {
            const double fy = 1.0 + unit(rng) * 7.0, fx = 1.0 + unit(rng) * 7.0;
            const double ph = unit(rng) * 2.0 * M_PI;
            const double amp = 0.5 / spec.n_sinusoids;
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    layers[3][size_t(y) * W + x] +=
                        0.5 / spec.n_sinusoids +
                        amp * std::sin(2.0 * M_PI * (fy * y / H + fx * x / W) + ph);
        }
        for (auto& v : layers[3]) v = std::clamp(v, 0.0, 1.0);
    }

    // layer 4: smoothed noise (correlates across bands through the mixing)
    if (spec.n_noise) {
        Grid<double> noise(H, W, 1);
        for (auto& v : noise.v) v = unit(rng);
        noise = gaussian_blur(noise, 1.5);
        layers[4] = noise.v;
        scenedetail::normalize01(layers[4]);
    }

    // mixing matrix: rows sum to 1
    std::vector<double> M = spec.mixing;
    if (M.empty()) {
        M.resize(size_t(B) * SceneSpec::kPrimitives);
        for (int b = 0; b < B; ++b) {
            double row = 0;
            for (int k = 0; k < SceneSpec::kPrimitives; ++k) {
                const double v = 0.05 + unit(rng);
                M[size_t(b) * SceneSpec::kPrimitives + k] = v;
                row += v;
            }
            for (int k = 0; k < SceneSpec::kPrimitives; ++k)
                M[size_t(b) * SceneSpec::kPrimitives + k] /= row;
        }
    } else if (M.size() != size_t(B) * SceneSpec::kPrimitives) {
        throw ShapeError("generate_scene: mixing matrix must be bands x 5");
    }

    Grid<T> out(H, W, B);
    for (size_t p = 0; p < npx; ++p) {
        T* op = out.v.data() + p * B;
        for (int b = 0; b < B; ++b) {
            double acc = 0;
            for (int k = 0; k < SceneSpec::kPrimitives; ++k)
                acc += M[size_t(b) * SceneSpec::kPrimitives + k] * layers[k][p];
            op[b] = T(std::clamp(acc, 0.0, 1.0));
        }
    }
    return out;
}

} // namespace edno

#endif
