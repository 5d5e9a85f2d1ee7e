#ifndef EDNO_METRICS_HPP
#define EDNO_METRICS_HPP

#include <array>
#include <cmath>
#include <limits>

#include "edno/grid.hpp"
#include "edno/wald.hpp"

// Reference metrics (PSNR, SSIM, Q2n, SAM, ERGAS) for the reduced-resolution
// protocol and the QNR family (D_lambda, D_s, QNR) for full resolution.
// Everything is computed in double regardless of the grid scalar type.

namespace edno {

constexpr double kPsnrCap = 100.0; // dB reported on exact equality

template <typename T>
double psnr(const Grid<T>& h, const Grid<T>& g, double peak = 1.0) {
    if (!h.same_shape(g)) throw ShapeError("psnr: shape mismatch");
    double mse = 0;
    for (size_t i = 0; i < h.size(); ++i) {
        const double d = double(h.v[i]) - double(g.v[i]);
        mse += d * d;
    }
    mse /= double(h.size());
    if (mse == 0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

namespace metricdetail {

// 11x11 Gaussian window, sigma 1.5, normalized
inline const std::array<double, 121>& ssim_window() {
    static const std::array<double, 121> w = [] {
        std::array<double, 121> k{};
        double sum = 0;
        for (int y = -5; y <= 5; ++y)
            for (int x = -5; x <= 5; ++x) {
                const double v = std::exp(-(y * y + x * x) / (2.0 * 1.5 * 1.5));
                k[size_t((y + 5) * 11 + (x + 5))] = v;
                sum += v;
            }
        for (auto& v : k) v /= sum;
        return k;
    }();
    return w;
}

} // namespace metricdetail

/// Mean SSIM over channels; 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1, averaged over window centers where the full
/// window fits.
template <typename T>
double ssim(const Grid<T>& h, const Grid<T>& g) {
    if (!h.same_shape(g)) throw ShapeError("ssim: shape mismatch");
    if (h.h < 11 || h.w < 11) throw ShapeError("ssim: image smaller than the 11x11 window");
    const auto& win = metricdetail::ssim_window();
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0;
    size_t count = 0;
    for (int c = 0; c < h.c; ++c) {
        for (int y = 5; y < h.h - 5; ++y) {
            for (int x = 5; x < h.w - 5; ++x) {
                double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
                for (int dy = -5; dy <= 5; ++dy)
                    for (int dx = -5; dx <= 5; ++dx) {
                        const double wv = win[size_t((dy + 5) * 11 + (dx + 5))];
                        const double a = double(h.at(y + dy, x + dx, c));
                        const double b = double(g.at(y + dy, x + dx, c));
                        mx += wv * a;
                        my += wv * b;
                        xx += wv * a * a;
                        yy += wv * b * b;
                        xy += wv * a * b;
                    }
                const double vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
                total += ((2 * mx * my + c1) * (2 * cov + c2)) /
                         ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
        }
    }
    return total / double(count);
}

/// Mean spectral angle in radians; pixels where either spectral vector is
/// zero are skipped.
template <typename T>
double sam(const Grid<T>& h, const Grid<T>& g) {
    if (!h.same_shape(g)) throw ShapeError("sam: shape mismatch");
    const size_t npx = size_t(h.h) * h.w;
    double total = 0;
    size_t count = 0;
    for (size_t p = 0; p < npx; ++p) {
        const T* a = h.v.data() + p * h.c;
        const T* b = g.v.data() + p * h.c;
        double dot = 0, na = 0, nb = 0;
        for (int c = 0; c < h.c; ++c) {
            dot += double(a[c]) * double(b[c]);
            na += double(a[c]) * double(a[c]);
            nb += double(b[c]) * double(b[c]);
        }
        if (na == 0 || nb == 0) continue;
        const double cosv = std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
        total += std::acos(cosv);
        ++count;
    }
    return count ? total / double(count) : 0.0;
}

/// Relative dimensionless global error: (100/r) * sqrt(mean_b (RMSE_b/mu_b)^2)
/// where mu_b is the reference band mean.
template <typename T>
double ergas(const Grid<T>& h, const Grid<T>& g, double ratio) {
    if (!h.same_shape(g)) throw ShapeError("ergas: shape mismatch");
    const size_t npx = size_t(h.h) * h.w;
    double acc = 0;
    for (int c = 0; c < h.c; ++c) {
        double mse = 0, mu = 0;
        for (size_t p = 0; p < npx; ++p) {
            const double a = double(h.v[p * h.c + c]), b = double(g.v[p * h.c + c]);
            mse += (a - b) * (a - b);
            mu += b;
        }
        mse /= double(npx);
        mu /= double(npx);
        if (mu == 0) throw NumericError("ergas: reference band " + std::to_string(c) +
                                        " has zero mean");
        acc += mse / (mu * mu);
    }
    return (100.0 / ratio) * std::sqrt(acc / double(h.c));
}

namespace metricdetail {

// Cayley-Dickson product and conjugate for dims 1, 2, 4, 8.
inline void hc_mul(const double* a, const double* b, double* out, int n) {
    if (n == 1) {
        out[0] = a[0] * b[0];
        return;
    }
    const int half = n / 2;
    // (a1,a2)(b1,b2) = (a1 b1 - conj(b2) a2, b2 a1 + a2 conj(b1))
    std::vector<double> t1(half), t2(half), cb(half);
    hc_mul(a, b, out, half);
    for (int i = 0; i < half; ++i) cb[i] = i == 0 ? b[half] : -b[half + i];
    hc_mul(cb.data(), a + half, t1.data(), half);
    for (int i = 0; i < half; ++i) out[i] -= t1[i];
    hc_mul(b + half, a, t1.data(), half);
    for (int i = 0; i < half; ++i) cb[i] = i == 0 ? b[0] : -b[i];
    hc_mul(a + half, cb.data(), t2.data(), half);
    for (int i = 0; i < half; ++i) out[half + i] = t1[i] + t2[i];
}

inline void hc_conj(const double* a, double* out, int n) {
    out[0] = a[0];
    for (int i = 1; i < n; ++i) out[i] = -a[i];
}

inline double hc_norm(const double* a, int n) {
    double s = 0;
    for (int i = 0; i < n; ++i) s += a[i] * a[i];
    return std::sqrt(s);
}

// Universal quality index between two single-band views over one block.
// Degenerate blocks follow the classic convention: a vanishing factor whose
// counterpart also vanishes contributes 1.
inline double uqi_block(const double* mean_and_stats) {
    const double mx = mean_and_stats[0], my = mean_and_stats[1];
    const double vx = mean_and_stats[2], vy = mean_and_stats[3], cov = mean_and_stats[4];
    const double tiny = 1e-12;
    const double d1 = vx + vy, d2 = mx * mx + my * my;
    if (d1 < tiny && d2 < tiny) return 1.0;
    if (d1 < tiny) return 2.0 * mx * my / d2;
    if (d2 < tiny) return 2.0 * cov / d1;
    return (4.0 * cov * mx * my) / (d1 * d2);
}

} // namespace metricdetail

/// Hypercomplex generalization of the universal quality index, averaged over
/// non-overlapping blocks. Band count must be 1, 2, 4 or 8. When the image
/// is smaller than the block size the whole image is one block.
template <typename T>
double q2n(const Grid<T>& h, const Grid<T>& g, int block = 32) {
    if (!h.same_shape(g)) throw ShapeError("q2n: shape mismatch");
    const int B = h.c;
    if (B != 1 && B != 2 && B != 4 && B != 8)
        throw ShapeError("q2n: band count must be 1, 2, 4 or 8");
    const int bs = std::min({block, h.h, h.w});
    const int by = h.h / bs, bx = h.w / bs;
    double total = 0;
    int blocks = 0;
    std::vector<double> mu1(B), mu2(B), s12(B), z1(B), z2(B), c2(B), prod(B);
    for (int gy = 0; gy < by; ++gy) {
        for (int gx = 0; gx < bx; ++gx) {
            std::fill(mu1.begin(), mu1.end(), 0.0);
            std::fill(mu2.begin(), mu2.end(), 0.0);
            std::fill(s12.begin(), s12.end(), 0.0);
            double e1 = 0, e2 = 0;
            const int n = bs * bs;
            for (int y = gy * bs; y < (gy + 1) * bs; ++y) {
                for (int x = gx * bs; x < (gx + 1) * bs; ++x) {
                    for (int c = 0; c < B; ++c) {
                        z1[c] = double(h.at(y, x, c));
                        z2[c] = double(g.at(y, x, c));
                        mu1[c] += z1[c];
                        mu2[c] += z2[c];
                        e1 += z1[c] * z1[c];
                        e2 += z2[c] * z2[c];
                    }
                    metricdetail::hc_conj(z2.data(), c2.data(), B);
                    metricdetail::hc_mul(z1.data(), c2.data(), prod.data(), B);
                    for (int c = 0; c < B; ++c) s12[c] += prod[c];
                }
            }
            for (int c = 0; c < B; ++c) {
                mu1[c] /= n;
                mu2[c] /= n;
                s12[c] /= n;
            }
            metricdetail::hc_conj(mu2.data(), c2.data(), B);
            metricdetail::hc_mul(mu1.data(), c2.data(), prod.data(), B);
            for (int c = 0; c < B; ++c) s12[c] -= prod[c];
            const double m1 = metricdetail::hc_norm(mu1.data(), B);
            const double m2 = metricdetail::hc_norm(mu2.data(), B);
            const double var1 = e1 / n - m1 * m1;
            const double var2 = e2 / n - m2 * m2;
            const double cov = metricdetail::hc_norm(s12.data(), B);
            const double stats[5] = {m1, m2, var1, var2, cov};
            total += metricdetail::uqi_block(stats);
            ++blocks;
        }
    }
    return total / double(blocks);
}

namespace metricdetail {

// Block-averaged scalar UQI between two single-band grids.
template <typename T>
double uqi_image(const Grid<T>& a, int ca, const Grid<T>& b, int cb, int block) {
    const int bs = std::min({block, a.h, a.w});
    const int by = a.h / bs, bx = a.w / bs;
    double total = 0;
    int blocks = 0;
    for (int gy = 0; gy < by; ++gy) {
        for (int gx = 0; gx < bx; ++gx) {
            double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
            const int n = bs * bs;
            for (int y = gy * bs; y < (gy + 1) * bs; ++y)
                for (int x = gx * bs; x < (gx + 1) * bs; ++x) {
                    const double u = double(a.at(y, x, ca)), v = double(b.at(y, x, cb));
                    mx += u;
                    my += v;
                    xx += u * u;
                    yy += v * v;
                    xy += u * v;
                }
            mx /= n;
            my /= n;
            const double stats[5] = {mx, my, xx / n - mx * mx, yy / n - my * my,
                                     xy / n - mx * my};
            total += uqi_block(stats);
            ++blocks;
        }
    }
    return total / double(blocks);
}

} // namespace metricdetail

/// Spectral distortion: mean absolute difference between the inter-band
/// similarity structure of the fused image and that of the LR-MS (p = 1).
template <typename T>
double d_lambda(const Grid<T>& fused, const Grid<T>& lrms, int block = 32) {
    if (fused.c != lrms.c) throw ShapeError("d_lambda: band count mismatch");
    const int B = fused.c;
    if (B < 2) throw ShapeError("d_lambda: needs at least two bands");
    double acc = 0;
    for (int b1 = 0; b1 < B; ++b1)
        for (int b2 = 0; b2 < B; ++b2) {
            if (b1 == b2) continue;
            const double qh = metricdetail::uqi_image(fused, b1, fused, b2, block);
            const double ql = metricdetail::uqi_image(lrms, b1, lrms, b2, block);
            acc += std::abs(qh - ql);
        }
    return acc / double(B * (B - 1));
}

/// Spatial distortion: mean absolute difference between each band's
/// similarity to PAN at full resolution and to the Wald-degraded PAN at low
/// resolution (q = 1).
template <typename T>
double d_s(const Grid<T>& fused, const Grid<T>& lrms, const Grid<T>& pan, int block = 32) {
    if (fused.c != lrms.c) throw ShapeError("d_s: band count mismatch");
    if (pan.c != 1 || pan.h != fused.h || pan.w != fused.w)
        throw ShapeError("d_s: pan must be single-band at fused resolution");
    const Grid<T> pan_lr = wald_blur_decimate(pan, lrms.h, lrms.w);
    double acc = 0;
    for (int b = 0; b < fused.c; ++b) {
        const double qh = metricdetail::uqi_image(fused, b, pan, 0, block);
        const double ql = metricdetail::uqi_image(lrms, b, pan_lr, 0, block);
        acc += std::abs(qh - ql);
    }
    return acc / double(fused.c);
}

inline double qnr(double dl, double ds) { return (1.0 - dl) * (1.0 - ds); }

// ---------------------------------------------------------------------------

struct MetricReport {
    bool has_reference = false;
    double psnr = std::numeric_limits<double>::quiet_NaN();
    double ssim = std::numeric_limits<double>::quiet_NaN();
    double q2n = std::numeric_limits<double>::quiet_NaN();
    double sam = std::numeric_limits<double>::quiet_NaN(); // radians
    double ergas = std::numeric_limits<double>::quiet_NaN();
    double d_lambda = 0, d_s = 0, qnr = 0;

    double sam_deg() const { return sam * 180.0 / M_PI; }
};

/// Reference metrics when gt is present, the QNR family always.
template <typename T>
MetricReport evaluate_sample(const Grid<T>& fused, const SamplePair<T>& s) {
    MetricReport r;
    if (s.gt) {
        r.has_reference = true;
        r.psnr = psnr(fused, *s.gt);
        r.ssim = ssim(fused, *s.gt);
        const int B = fused.c;
        if (B == 1 || B == 2 || B == 4 || B == 8) r.q2n = q2n(fused, *s.gt);
        r.sam = sam(fused, *s.gt);
        r.ergas = ergas(fused, *s.gt, double(fused.h) / double(s.lrms.h));
    }
    r.d_lambda = d_lambda(fused, s.lrms);
    r.d_s = d_s(fused, s.lrms, bilinear_resize(s.pan, fused.h, fused.w));
    r.qnr = qnr(r.d_lambda, r.d_s);
    return r;
}

} // namespace edno

#endif
