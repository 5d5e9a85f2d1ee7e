#include <doctest.h>

#include <tuple>

#include "edno/fft.hpp"
#include "oracles.hpp"

using namespace edno;

namespace {
std::mt19937_64 rng(42);
}

TEST_CASE("fft2: constant 4x4 grid concentrates in the DC bin") {
    Grid<float> x(4, 4, 1);
    for (auto& v : x.v) v = 1.0f;
    const ComplexGrid<float> z = fft2(x);
    CHECK(z.re[0] == doctest::Approx(16.0).epsilon(1e-6));
    for (size_t i = 0; i < z.size(); ++i) {
        if (i != 0) CHECK(std::abs(z.re[i]) < 1e-5f);
        CHECK(std::abs(z.im[i]) < 1e-5f);
    }
}

TEST_CASE("fft2: unit impulse at the origin gives a flat spectrum") {
    Grid<float> x(8, 8, 1);
    x.at(0, 0, 0) = 1.0f;
    const ComplexGrid<float> z = fft2(x);
    for (size_t i = 0; i < z.size(); ++i) {
        CHECK(z.re[i] == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(std::abs(z.im[i]) < 1e-6f);
    }
}

TEST_CASE("fft2 matches the direct DFT oracle") {
    for (auto [h, w, c] : {std::tuple{8, 8, 2}, {16, 16, 4}, {12, 10, 1}, {6, 9, 2}}) {
        const Grid<double> x = oracles::random_grid<double>(rng, h, w, c, -1, 1);
        const ComplexGrid<double> z = fft2(x);
        const ComplexGrid<double> ref = oracles::dft2_direct(x);
        double max_err = 0;
        for (size_t i = 0; i < z.size(); ++i) {
            max_err = std::max(max_err, std::abs(z.re[i] - ref.re[i]));
            max_err = std::max(max_err, std::abs(z.im[i] - ref.im[i]));
        }
        CAPTURE(h);
        CAPTURE(w);
        CHECK(max_err < 1e-6);
    }
}

TEST_CASE("ifft2 of an all-zero spectrum is the zero grid") {
    ComplexGrid<float> z(8, 8, 3);
    const Grid<float> x = ifft2(z);
    for (float v : x.v) CHECK(v == 0.0f);
}

TEST_CASE("ifft2(fft2(x)) roundtrip, single precision") {
    for (auto [h, w, c] : {std::tuple{64, 64, 4}, {128, 128, 8}, {32, 48, 2}}) {
        const Grid<float> x = oracles::random_grid<float>(rng, h, w, c);
        float resid = 0;
        const Grid<float> back = ifft2(fft2(x), &resid);
        float max_err = 0;
        for (size_t i = 0; i < x.size(); ++i)
            max_err = std::max(max_err, std::abs(back.v[i] - x.v[i]));
        CAPTURE(h);
        CHECK(max_err < 1e-5f);
        CHECK(resid < 1e-4f);
    }
}

TEST_CASE("spectrum of a circularly shifted image inverts to the shifted image") {
    const int H = 16, W = 16;
    const Grid<double> x = oracles::random_grid<double>(rng, H, W, 1);
    Grid<double> shifted(H, W, 1);
    const int a = 5, b = 3;
    for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx)
            shifted.at(y, xx, 0) = x.at((y - a + H) % H, (xx - b + W) % W, 0);
    // apply the shift phase ramp to fft2(x), invert, compare to the shift
    ComplexGrid<double> z = fft2(x);
    for (int u = 0; u < H; ++u)
        for (int v = 0; v < W; ++v) {
            const double ang = -2.0 * M_PI * (double(u) * a / H + double(v) * b / W);
            const std::complex<double> f(z.re[z.idx(u, v, 0)], z.im[z.idx(u, v, 0)]);
            const std::complex<double> r = f * std::complex<double>(std::cos(ang), std::sin(ang));
            z.re[z.idx(u, v, 0)] = r.real();
            z.im[z.idx(u, v, 0)] = r.imag();
        }
    const Grid<double> back = ifft2(z);
    for (size_t i = 0; i < back.size(); ++i)
        CHECK(back.v[i] == doctest::Approx(shifted.v[i]).epsilon(1e-9));
}

TEST_CASE("Parseval: energy matches between domains") {
    for (auto [h, w, c] : {std::tuple{16, 16, 4}, {32, 32, 2}, {24, 24, 1}}) {
        const Grid<float> x = oracles::random_grid<float>(rng, h, w, c, -2, 2);
        const ComplexGrid<float> z = fft2(x);
        double spatial = 0, freq = 0;
        for (float v : x.v) spatial += double(v) * v;
        for (size_t i = 0; i < z.size(); ++i)
            freq += double(z.re[i]) * z.re[i] + double(z.im[i]) * z.im[i];
        freq /= double(h) * w;
        CHECK(std::abs(spatial - freq) / spatial < 1e-5);
    }
}

TEST_CASE("fft2 is linear") {
    const Grid<float> x = oracles::random_grid<float>(rng, 16, 16, 2);
    const Grid<float> y = oracles::random_grid<float>(rng, 16, 16, 2);
    const float a = 1.7f, b = -0.6f;
    Grid<float> mix(16, 16, 2);
    for (size_t i = 0; i < mix.size(); ++i) mix.v[i] = a * x.v[i] + b * y.v[i];
    const ComplexGrid<float> zm = fft2(mix), zx = fft2(x), zy = fft2(y);
    double scale = 0;
    for (size_t i = 0; i < zm.size(); ++i)
        scale = std::max(scale, std::abs(double(zm.re[i])) + std::abs(double(zm.im[i])));
    for (size_t i = 0; i < zm.size(); ++i) {
        CHECK(std::abs(zm.re[i] - (a * zx.re[i] + b * zy.re[i])) / scale < 1e-5);
        CHECK(std::abs(zm.im[i] - (a * zx.im[i] + b * zy.im[i])) / scale < 1e-5);
    }
}

TEST_CASE("shift theorem: magnitude invariant, phase offset linear in frequency") {
    // double precision: per-bin relative magnitude comparisons are meaningless
    // in f32 at the tiny bins
    std::mt19937_64 lrng(7);
    std::uniform_int_distribution<int> dshift(0, 31);
    const int H = 32, W = 32;
    for (int trial = 0; trial < 10; ++trial) {
        const Grid<double> x = oracles::random_grid<double>(lrng, H, W, 1);
        const int a = dshift(lrng), b = dshift(lrng);
        Grid<double> sh(H, W, 1);
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx)
                sh.at(y, xx, 0) = x.at((y - a + H) % H, (xx - b + W) % W, 0);
        const PolarGrid<double> p0 = to_polar(fft2(x));
        const PolarGrid<double> p1 = to_polar(fft2(sh));
        double mag_scale = 0;
        for (double m : p0.mag) mag_scale = std::max(mag_scale, m);
        for (int u = 0; u < H; ++u)
            for (int v = 0; v < W; ++v) {
                const size_t i = size_t(u) * W + v;
                CHECK(std::abs(p1.mag[i] - p0.mag[i]) / std::max(p0.mag[i], 1e-12) < 1e-5);
                if (p0.mag[i] < 1e-9 * mag_scale) continue; // phase undefined
                const double expected = -2.0 * M_PI * (double(u) * a / H + double(v) * b / W);
                double diff = p1.phase[i] - p0.phase[i] - expected;
                diff = std::remainder(diff, 2.0 * M_PI);
                CHECK(std::abs(diff) < 1e-4);
            }
    }
}

TEST_CASE("to_polar basics and conventions") {
    ComplexGrid<float> z(1, 3, 1);
    z.re = {1.0f, 0.0f, -2.0f};
    z.im = {0.0f, -2.0f, 0.0f};
    const PolarGrid<float> p = to_polar(z);
    CHECK(p.mag[0] == doctest::Approx(1.0));
    CHECK(p.phase[0] == doctest::Approx(0.0));
    CHECK(p.mag[1] == doctest::Approx(2.0));
    CHECK(p.phase[1] == doctest::Approx(-M_PI / 2));
    // (-2, 0): atan2 would give +pi, folded to -pi to stay in [-pi, pi)
    CHECK(p.phase[2] == doctest::Approx(-M_PI));
    // zero magnitude carries phase 0
    ComplexGrid<float> zero(1, 1, 1);
    const PolarGrid<float> pz = to_polar(zero);
    CHECK(pz.mag[0] == 0.0f);
    CHECK(pz.phase[0] == 0.0f);
}

TEST_CASE("polar roundtrip on a random spectrum") {
    const Grid<float> x = oracles::random_grid<float>(rng, 16, 16, 3, -1, 1);
    const ComplexGrid<float> z = fft2(x);
    const ComplexGrid<float> back = from_polar(to_polar(z));
    double scale = 0;
    for (size_t i = 0; i < z.size(); ++i)
        scale = std::max(scale, std::abs(double(z.re[i])));
    for (size_t i = 0; i < z.size(); ++i) {
        CHECK(std::abs(back.re[i] - z.re[i]) / scale < 1e-6);
        CHECK(std::abs(back.im[i] - z.im[i]) / scale < 1e-6);
    }
}

TEST_CASE("fft sizes with odd factors agree with the oracle") {
    for (auto [h, w] : {std::pair{96, 96}, {20, 12}, {7, 7}, {1, 5}}) {
        const Grid<double> x = oracles::random_grid<double>(rng, h, w, 1, -1, 1);
        const ComplexGrid<double> z = fft2(x);
        const ComplexGrid<double> ref = oracles::dft2_direct(x);
        double max_err = 0, scale = 1;
        for (size_t i = 0; i < z.size(); ++i) {
            scale = std::max({scale, std::abs(ref.re[i]), std::abs(ref.im[i])});
            max_err = std::max({max_err, std::abs(z.re[i] - ref.re[i]),
                                std::abs(z.im[i] - ref.im[i])});
        }
        CAPTURE(h);
        CAPTURE(w);
        CHECK(max_err / scale < 1e-12);
    }
}
