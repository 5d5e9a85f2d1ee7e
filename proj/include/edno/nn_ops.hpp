#ifndef EDNO_NN_OPS_HPP
#define EDNO_NN_OPS_HPP

#include <algorithm>
#include <cmath>

#include "edno/grid.hpp"

// Neural primitives the operator is assembled from. All spatial convolutions
// use reflect padding (mirror without repeating the edge sample), so H and W
// must be at least 2 where a 3x3 window is involved.

namespace edno {

// index reflection for a 1-px border: -1 -> 1, n -> n-2
inline int reflect1(int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

/// Per-pixel linear map: y[p] = W x[p] + b, W is (c_out, c_in).
/// Accumulates output-channel vectors (broadcast input scalar, contiguous
/// FMA over c_out) so the inner loop vectorizes without a reduction.
template <typename T>
Grid<T> conv1x1(const Grid<T>& x, const Block<T>& w, const Block<T>* b = nullptr) {
    if (w.dims.size() != 2 || w.dims[1] != x.c)
        throw ShapeError("conv1x1: weight " + std::to_string(w.dims.size()) +
                         "-d or c_in mismatch with input " + x.shape_str());
    const int co = int(w.dims[0]), ci = x.c;
    if (b && (b->dims.size() != 1 || b->dims[0] != co))
        throw ShapeError("conv1x1: bias shape mismatch");
    std::vector<T> wt(size_t(ci) * co); // (ci, co)
    for (int o = 0; o < co; ++o)
        for (int i = 0; i < ci; ++i) wt[size_t(i) * co + o] = w.v[size_t(o) * ci + i];
    Grid<T> y(x.h, x.w, co);
    const size_t npx = size_t(x.h) * x.w;
    for (size_t p = 0; p < npx; ++p) {
        const T* xp = x.v.data() + p * ci;
        T* yp = y.v.data() + p * co;
        if (b)
            for (int o = 0; o < co; ++o) yp[o] = b->v[o];
        for (int i = 0; i < ci; ++i) {
            const T xi = xp[i];
            const T* wr = wt.data() + size_t(i) * co;
            for (int o = 0; o < co; ++o) yp[o] += wr[o] * xi;
        }
    }
    return y;
}

namespace nndetail {

// Repack a (co, ci, 3, 3) kernel to (tap, co, ci): contiguous over ci.
template <typename T>
std::vector<T> pack_full3x3(const Block<T>& w, int co, int ci) {
    std::vector<T> r(size_t(9) * co * ci);
    for (int o = 0; o < co; ++o)
        for (int i = 0; i < ci; ++i)
            for (int t = 0; t < 9; ++t)
                r[(size_t(t) * co + o) * ci + i] = w.v[(size_t(o) * ci + i) * 9 + t];
    return r;
}

// Repack a (co, ci, 3, 3) kernel to (tap, ci, co): contiguous over co.
template <typename T>
std::vector<T> pack_full3x3_oc(const Block<T>& w, int co, int ci) {
    std::vector<T> r(size_t(9) * co * ci);
    for (int o = 0; o < co; ++o)
        for (int i = 0; i < ci; ++i)
            for (int t = 0; t < 9; ++t)
                r[(size_t(t) * ci + i) * co + o] = w.v[(size_t(o) * ci + i) * 9 + t];
    return r;
}

} // namespace nndetail

/// Full 3x3 convolution with reflect padding; weight is (c_out, c_in, 3, 3).
/// Same broadcast-FMA layout as conv1x1.
template <typename T>
Grid<T> conv3x3_reflect(const Grid<T>& x, const Block<T>& w, const Block<T>* b = nullptr) {
    if (x.h < 2 || x.w < 2) throw ShapeError("conv3x3: spatial dims must be >= 2");
    if (w.dims.size() != 4 || w.dims[1] != x.c || w.dims[2] != 3 || w.dims[3] != 3)
        throw ShapeError("conv3x3: weight must be (c_out, c_in, 3, 3) with c_in = " +
                         std::to_string(x.c));
    const int co = int(w.dims[0]), ci = x.c, H = x.h, W = x.w;
    if (b && (b->dims.size() != 1 || b->dims[0] != co))
        throw ShapeError("conv3x3: bias shape mismatch");
    const std::vector<T> wp = nndetail::pack_full3x3_oc(w, co, ci);
    Grid<T> y(H, W, co);
    for (int h = 0; h < H; ++h) {
        for (int v = 0; v < W; ++v) {
            T* yp = y.px(h, v);
            if (b)
                for (int o = 0; o < co; ++o) yp[o] = b->v[o];
            for (int t = 0; t < 9; ++t) {
                const int hh = reflect1(h + t / 3 - 1, H);
                const int ww = reflect1(v + t % 3 - 1, W);
                const T* xp = x.px(hh, ww);
                const T* wt = wp.data() + size_t(t) * ci * co;
                for (int i = 0; i < ci; ++i) {
                    const T xi = xp[i];
                    const T* wr = wt + size_t(i) * co;
                    for (int o = 0; o < co; ++o) yp[o] += wr[o] * xi;
                }
            }
        }
    }
    return y;
}

/// Per-channel 3x3 convolution with reflect padding; kernels is (c, 3, 3).
template <typename T>
Grid<T> depthwise3x3_reflect(const Grid<T>& x, const Block<T>& k) {
    if (x.h < 2 || x.w < 2) throw ShapeError("depthwise3x3: spatial dims must be >= 2");
    if (k.dims.size() != 3 || k.dims[0] != x.c || k.dims[1] != 3 || k.dims[2] != 3)
        throw ShapeError("depthwise3x3: kernels must be (c, 3, 3) with c = " +
                         std::to_string(x.c));
    const int C = x.c, H = x.h, W = x.w;
    // repack to (tap, c)
    std::vector<T> kp(size_t(9) * C);
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < 9; ++t) kp[size_t(t) * C + c] = k.v[size_t(c) * 9 + t];
    Grid<T> y(H, W, C);
    for (int h = 0; h < H; ++h) {
        for (int v = 0; v < W; ++v) {
            T* yp = y.px(h, v);
            for (int t = 0; t < 9; ++t) {
                const int hh = reflect1(h + t / 3 - 1, H);
                const int ww = reflect1(v + t % 3 - 1, W);
                const T* xp = x.px(hh, ww);
                const T* kt = kp.data() + size_t(t) * C;
                for (int c = 0; c < C; ++c) yp[c] += kt[c] * xp[c];
            }
        }
    }
    return y;
}

/// Per-channel standardization over the spatial axes, no learnable affine:
/// y = (x - mean) / sqrt(var + eps), population variance.
template <typename T>
Grid<T> instance_norm(const Grid<T>& x, T eps = T(1e-5)) {
    if (size_t(x.h) * x.w < 2) throw ShapeError("instance_norm: needs >= 2 spatial samples");
    const int C = x.c;
    const size_t npx = size_t(x.h) * x.w;
    std::vector<double> mean(C, 0.0), var(C, 0.0);
    for (size_t p = 0; p < npx; ++p) {
        const T* xp = x.v.data() + p * C;
        for (int c = 0; c < C; ++c) mean[c] += xp[c];
    }
    for (int c = 0; c < C; ++c) mean[c] /= double(npx);
    for (size_t p = 0; p < npx; ++p) {
        const T* xp = x.v.data() + p * C;
        for (int c = 0; c < C; ++c) {
            const double d = xp[c] - mean[c];
            var[c] += d * d;
        }
    }
    Grid<T> y(x.h, x.w, C);
    std::vector<T> mu(C), inv(C);
    for (int c = 0; c < C; ++c) {
        mu[c] = T(mean[c]);
        inv[c] = T(1.0 / std::sqrt(var[c] / double(npx) + double(eps)));
    }
    for (size_t p = 0; p < npx; ++p) {
        const T* xp = x.v.data() + p * C;
        T* yp = y.v.data() + p * C;
        for (int c = 0; c < C; ++c) yp[c] = (xp[c] - mu[c]) * inv[c];
    }
    return y;
}

template <typename T>
Grid<T> relu(const Grid<T>& x) {
    Grid<T> y(x.h, x.w, x.c);
    for (size_t i = 0; i < x.size(); ++i) y.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
    return y;
}

template <typename T>
T sigmoid_scalar(T x) {
    if (x >= T(0)) {
        return T(1) / (T(1) + std::exp(-x));
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
Grid<T> sigmoid(const Grid<T>& x) {
    Grid<T> y(x.h, x.w, x.c);
    for (size_t i = 0; i < x.size(); ++i) y.v[i] = sigmoid_scalar(x.v[i]);
    return y;
}

/// One continuous sampling location and its four-tap bilinear footprint.
/// Convention: grid point i sits at coordinate i; queries are clamped to
/// [0, H-1] x [0, W-1] before the footprint is taken.
template <typename T>
struct BilinearTap {
    int y0, x0, y1, x1;
    T fy, fx; // fractional parts after clamping
};

template <typename T>
BilinearTap<T> bilinear_tap(T qy, T qx, int h, int w) {
    qy = std::clamp(qy, T(0), T(h - 1));
    qx = std::clamp(qx, T(0), T(w - 1));
    BilinearTap<T> t;
    t.y0 = int(std::floor(qy));
    t.x0 = int(std::floor(qx));
    t.y1 = std::min(t.y0 + 1, h - 1);
    t.x1 = std::min(t.x0 + 1, w - 1);
    t.fy = qy - T(t.y0);
    t.fx = qx - T(t.x0);
    return t;
}

/// Bilinear interpolation of x at a list of (row, col) queries laid out as
/// an out_h x out_w grid.
template <typename T>
Grid<T> bilinear_sample(const Grid<T>& x, const std::vector<std::pair<T, T>>& queries,
                        int out_h, int out_w) {
    if (queries.size() != size_t(out_h) * out_w)
        throw ShapeError("bilinear_sample: query count != out_h*out_w");
    Grid<T> y(out_h, out_w, x.c);
    const int C = x.c;
    for (size_t q = 0; q < queries.size(); ++q) {
        const auto t = bilinear_tap(queries[q].first, queries[q].second, x.h, x.w);
        const T w00 = (T(1) - t.fy) * (T(1) - t.fx), w01 = (T(1) - t.fy) * t.fx;
        const T w10 = t.fy * (T(1) - t.fx), w11 = t.fy * t.fx;
        const T* p00 = x.px(t.y0, t.x0);
        const T* p01 = x.px(t.y0, t.x1);
        const T* p10 = x.px(t.y1, t.x0);
        const T* p11 = x.px(t.y1, t.x1);
        T* yp = y.v.data() + q * C;
        for (int c = 0; c < C; ++c)
            yp[c] = w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
    }
    return y;
}

/// Queries mapping a dst_h x dst_w grid onto a src_h x src_w one with the
/// ratio convention dst coordinate d -> source coordinate d * (src/dst).
/// This is the exact inverse of integer decimation (src index r*i maps back
/// to dst index i), which keeps lifting, the global residual and the Wald
/// degradation mutually consistent.
template <typename T>
std::vector<std::pair<T, T>> resample_queries(int src_h, int src_w, int dst_h, int dst_w) {
    std::vector<std::pair<T, T>> q;
    q.reserve(size_t(dst_h) * dst_w);
    const T ry = T(src_h) / T(dst_h), rx = T(src_w) / T(dst_w);
    for (int y = 0; y < dst_h; ++y)
        for (int x = 0; x < dst_w; ++x) q.emplace_back(T(y) * ry, T(x) * rx);
    return q;
}

template <typename T>
Grid<T> bilinear_resize(const Grid<T>& x, int out_h, int out_w) {
    if (out_h == x.h && out_w == x.w) return x;
    return bilinear_sample(x, resample_queries<T>(x.h, x.w, out_h, out_w), out_h, out_w);
}

namespace nndetail {

// Keys cubic kernel, a = -0.5
template <typename T>
T cubic_weight(T d) {
    d = std::abs(d);
    if (d < T(1)) return (T(1.5) * d - T(2.5)) * d * d + T(1);
    if (d < T(2)) return ((T(-0.5) * d + T(2.5)) * d - T(4)) * d + T(2);
    return T(0);
}

} // namespace nndetail

/// Bicubic resize with the same ratio mapping as bilinear_resize. Used as the
/// classical upsampling baseline; not differentiable through the tape.
template <typename T>
Grid<T> bicubic_resize(const Grid<T>& x, int out_h, int out_w) {
    Grid<T> y(out_h, out_w, x.c);
    const T ry = T(x.h) / T(out_h), rx = T(x.w) / T(out_w);
    const int C = x.c;
    for (int oy = 0; oy < out_h; ++oy) {
        const T qy = std::clamp(T(oy) * ry, T(0), T(x.h - 1));
        const int iy = int(std::floor(qy));
        for (int ox = 0; ox < out_w; ++ox) {
            const T qx = std::clamp(T(ox) * rx, T(0), T(x.w - 1));
            const int ix = int(std::floor(qx));
            T* yp = y.px(oy, ox);
            T wsum = 0;
            for (int dy = -1; dy <= 2; ++dy) {
                const int sy = std::clamp(iy + dy, 0, x.h - 1);
                const T wy = nndetail::cubic_weight(qy - T(iy + dy));
                for (int dx = -1; dx <= 2; ++dx) {
                    const int sx = std::clamp(ix + dx, 0, x.w - 1);
                    const T wgt = wy * nndetail::cubic_weight(qx - T(ix + dx));
                    if (wgt == T(0)) continue;
                    wsum += wgt;
                    const T* xp = x.px(sy, sx);
                    for (int c = 0; c < C; ++c) yp[c] += wgt * xp[c];
                }
            }
            for (int c = 0; c < C; ++c) yp[c] /= wsum;
        }
    }
    return y;
}

} // namespace edno

#endif
