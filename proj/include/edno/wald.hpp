#ifndef EDNO_WALD_HPP
#define EDNO_WALD_HPP

#include <cmath>

#include "edno/model.hpp"
#include "edno/nn_ops.hpp"

// Reduced-resolution protocol: reference imagery is blurred with a Gaussian
// (sigma = ratio/2, truncated at 4 sigma, reflect padding) and decimated, so
// the original serves as ground truth. PAN for synthetic scenes is the
// unweighted band mean of the reference at full resolution.

namespace edno {

namespace walddetail {

template <typename T>
std::vector<T> gaussian_kernel(double sigma) {
    const int radius = std::max(1, int(std::floor(4.0 * sigma)));
    std::vector<T> k(size_t(2 * radius + 1));
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[size_t(i + radius)] = T(v);
        sum += v;
    }
    for (auto& v : k) v = T(double(v) / sum);
    return k;
}

// reflect index for arbitrary radius (mirror without edge repeat)
inline int reflect_i(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

} // namespace walddetail

/// Separable Gaussian blur, reflect padding, kernel truncated at 4 sigma.
template <typename T>
Grid<T> gaussian_blur(const Grid<T>& x, double sigma) {
    if (sigma <= 0) return x;
    const std::vector<T> k = walddetail::gaussian_kernel<T>(sigma);
    const int radius = int(k.size() / 2);
    const int C = x.c;
    Grid<T> tmp(x.h, x.w, C);
    for (int y = 0; y < x.h; ++y) { // horizontal
        for (int xx = 0; xx < x.w; ++xx) {
            T* op = tmp.px(y, xx);
            for (int i = -radius; i <= radius; ++i) {
                const T* ip = x.px(y, walddetail::reflect_i(xx + i, x.w));
                const T kv = k[size_t(i + radius)];
                for (int c = 0; c < C; ++c) op[c] += kv * ip[c];
            }
        }
    }
    Grid<T> out(x.h, x.w, C);
    for (int y = 0; y < x.h; ++y) { // vertical
        for (int xx = 0; xx < x.w; ++xx) {
            T* op = out.px(y, xx);
            for (int i = -radius; i <= radius; ++i) {
                const T* ip = tmp.px(walddetail::reflect_i(y + i, x.h), xx);
                const T kv = k[size_t(i + radius)];
                for (int c = 0; c < C; ++c) op[c] += kv * ip[c];
            }
        }
    }
    return out;
}

/// Blur then bring x down to (lr_h, lr_w): plain decimation when the ratio
/// is an exact integer, bilinear resampling otherwise. sigma defaults to
/// ratio/2 when negative.
template <typename T>
Grid<T> wald_blur_decimate(const Grid<T>& x, int lr_h, int lr_w, double sigma = -1.0) {
    if (lr_h < 1 || lr_w < 1 || lr_h > x.h || lr_w > x.w)
        throw ShapeError("wald_blur_decimate: bad target dims");
    const double ratio = double(x.h) / double(lr_h);
    if (sigma < 0) sigma = ratio / 2.0;
    const Grid<T> blurred = sigma > 1e-12 ? gaussian_blur(x, sigma) : x;
    if (x.h % lr_h == 0 && x.w % lr_w == 0 && x.h / lr_h == x.w / lr_w) {
        const int r = x.h / lr_h;
        if (r == 1) return blurred;
        Grid<T> lr(lr_h, lr_w, x.c);
        for (int y = 0; y < lr_h; ++y)
            for (int xx = 0; xx < lr_w; ++xx) {
                const T* ip = blurred.px(y * r, xx * r);
                T* op = lr.px(y, xx);
                for (int c = 0; c < x.c; ++c) op[c] = ip[c];
            }
        return lr;
    }
    return bilinear_resize(blurred, lr_h, lr_w);
}

/// Degrade a reference scene into a (PAN, LR-MS, GT) triplet at ratio r.
/// An integer r with divisible gt dims decimates; anything else (fractional
/// ratios, or ratios the dims cannot hold exactly) resamples after the blur.
template <typename T>
SamplePair<T> wald_degrade(const Grid<T>& gt, double r, double sigma = -1.0) {
    if (r < 1.0) throw ShapeError("wald_degrade: ratio must be >= 1");
    const double ri = std::round(r);
    int lr_h, lr_w;
    if (std::abs(r - ri) < 1e-9 && gt.h % int(ri) == 0 && gt.w % int(ri) == 0) {
        lr_h = gt.h / int(ri);
        lr_w = gt.w / int(ri);
    } else {
        lr_h = std::max(2, int(std::lround(gt.h / r)));
        lr_w = std::max(2, int(std::lround(gt.w / r)));
    }
    if (sigma < 0) sigma = r / 2.0;

    SamplePair<T> s;
    s.lrms = wald_blur_decimate(gt, lr_h, lr_w, r > 1.0 + 1e-12 ? sigma : 0.0);
    s.gt = gt;
    s.scale = double(gt.h) / double(lr_h);
    Grid<T> pan(gt.h, gt.w, 1);
    const size_t npx = size_t(gt.h) * gt.w;
    const T inv_b = T(1) / T(gt.c);
    for (size_t p = 0; p < npx; ++p) {
        const T* gp = gt.v.data() + p * gt.c;
        T acc = 0;
        for (int c = 0; c < gt.c; ++c) acc += gp[c];
        pan.v[p] = acc * inv_b;
    }
    s.pan = std::move(pan);
    return s;
}

/// Resample PAN to round((1+jitter) * dims) and update the scale metadata;
/// LR-MS and GT stay untouched.
template <typename T>
SamplePair<T> jitter_scale(const SamplePair<T>& sample, double jitter) {
    if (std::abs(jitter) >= 0.5) throw ConfigError("jitter_scale: |jitter| must be < 0.5");
    SamplePair<T> out = sample;
    if (jitter == 0.0) return out;
    const int nh = int(std::lround((1.0 + jitter) * sample.pan.h));
    const int nw = int(std::lround((1.0 + jitter) * sample.pan.w));
    out.pan = bilinear_resize(sample.pan, nh, nw);
    out.scale = double(nh) / double(sample.lrms.h);
    return out;
}

} // namespace edno

#endif
