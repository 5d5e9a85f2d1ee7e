#ifndef EDNO_FFT_HPP
#define EDNO_FFT_HPP

#include <complex>
#include <vector>

#include "edno/fastmath.hpp"
#include "edno/grid.hpp"

// 2-D discrete Fourier transforms and the polar (magnitude/phase) view.
//
// Conventions, fixed once so golden values stay stable:
//   forward: X[u,v] = sum_{h,w} x[h,w] * exp(-2*pi*i*(u*h/H + v*w/W))   (no factor)
//   inverse: x[h,w] = (1/(H*W)) * sum X[u,v] * exp(+2*pi*i*(...))
//
// Lines whose length is a power of two run the iterative radix-2
// Cooley-Tukey path; an even length with an odd factor recurses radix-2
// down to the odd base, which falls back to a direct O(m^2) DFT. Any
// positive size is therefore accepted.

namespace edno {
namespace fftdetail {

template <typename T>
struct LineTwiddles {
    // tw[k] = exp(sign * 2*pi*i * k / n), sign = -1 forward / +1 inverse
    std::vector<std::complex<T>> tw;
    int n = 0;

    void build(int n_, int sign) {
        n = n_;
        tw.resize(n);
        const double s = sign * 2.0 * M_PI / n;
        for (int k = 0; k < n; ++k)
            tw[k] = std::complex<T>(T(std::cos(s * k)), T(std::sin(s * k)));
    }
};

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Direct DFT on a strided subsequence of a scratch line. in/out must differ.
template <typename T>
void dft_direct(const std::complex<T>* in, int stride, std::complex<T>* out, int n,
                const LineTwiddles<T>& tw) {
    const int step = tw.n / n; // tw.n is a multiple of n by construction
    for (int k = 0; k < n; ++k) {
        std::complex<T> acc(0, 0);
        int idx = 0;
        for (int j = 0; j < n; ++j) {
            acc += in[size_t(j) * stride] * tw.tw[idx];
            idx += k * step;
            if (idx >= tw.n) idx -= tw.n * (idx / tw.n);
        }
        out[k] = acc;
    }
}

// In-place iterative radix-2 for power-of-two n.
template <typename T>
void fft_pow2(std::complex<T>* a, int n, const LineTwiddles<T>& tw) {
    // bit-reversal permutation
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        const int half = len >> 1;
        const int step = tw.n / len;
        for (int i = 0; i < n; i += len) {
            int tidx = 0;
            for (int k = 0; k < half; ++k) {
                const std::complex<T> u = a[i + k];
                const std::complex<T> t = a[i + k + half] * tw.tw[tidx];
                a[i + k] = u + t;
                a[i + k + half] = u - t;
                tidx += step;
            }
        }
    }
}

// General length: peel radix-2 recursively, direct DFT at the odd base.
template <typename T>
void fft_rec(const std::complex<T>* in, int stride, std::complex<T>* out, int n,
             const LineTwiddles<T>& tw) {
    if (n % 2 != 0) {
        dft_direct(in, stride, out, n, tw);
        return;
    }
    const int half = n / 2;
    fft_rec(in, stride * 2, out, half, tw);            // even part
    fft_rec(in + stride, stride * 2, out + half, half, tw); // odd part
    const int step = tw.n / n;
    for (int k = 0; k < half; ++k) {
        const std::complex<T> e = out[k];
        const std::complex<T> o = out[k + half] * tw.tw[size_t(k) * step];
        out[k] = e + o;
        out[k + half] = e - o;
    }
}

template <typename T>
void transform_line(std::complex<T>* line, std::complex<T>* scratch, int n,
                    const LineTwiddles<T>& tw) {
    if (n == 1) return;
    if (is_pow2(n)) {
        fft_pow2(line, n, tw);
    } else {
        fft_rec(line, 1, scratch, n, tw);
        std::copy(scratch, scratch + n, line);
    }
}

// Power-of-two transform over n super-elements of `lanes` contiguous
// scalars, `stride` scalars apart, in place. The butterflies are elementwise
// over the lane block, so the channel axis vectorizes with no gathers.
template <typename T>
void fft_pow2_lanes(T* re, T* im, int n, size_t stride, int lanes, const T* wre,
                    const T* wim) {
    for (int i = 1, j = 0; i < n; ++i) { // bit-reversal over super-elements
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            T* ra = re + size_t(i) * stride;
            T* rb = re + size_t(j) * stride;
            T* ia = im + size_t(i) * stride;
            T* ib = im + size_t(j) * stride;
            for (int c = 0; c < lanes; ++c) {
                std::swap(ra[c], rb[c]);
                std::swap(ia[c], ib[c]);
            }
        }
    }
    for (int len = 2; len <= n; len <<= 1) {
        const int half = len >> 1;
        const int step = n / len;
        for (int i = 0; i < n; i += len) {
            int tidx = 0;
            for (int k = 0; k < half; ++k) {
                const T wr = wre[tidx], wi = wim[tidx];
                tidx += step;
                T* ur = re + (size_t(i) + k) * stride;
                T* ui = im + (size_t(i) + k) * stride;
                T* vr = ur + size_t(half) * stride;
                T* vi = ui + size_t(half) * stride;
                for (int c = 0; c < lanes; ++c) {
                    const T tr = vr[c] * wr - vi[c] * wi;
                    const T ti = vr[c] * wi + vi[c] * wr;
                    vr[c] = ur[c] - tr;
                    vi[c] = ui[c] - ti;
                    ur[c] += tr;
                    ui[c] += ti;
                }
            }
        }
    }
}

// One 2-D transform over every channel of (re, im), in place. Power-of-two
// extents take the lane-vectorized path; other extents fall back to the
// per-channel scalar recursion.
template <typename T>
void transform2d(std::vector<T>& re, std::vector<T>& im, int h, int w, int c, int sign) {
    LineTwiddles<T> twr, twc;
    twr.build(w, sign);
    twc.build(h, sign);
    if (is_pow2(w) && is_pow2(h)) {
        std::vector<T> wr(size_t(std::max(h, w))), wi(size_t(std::max(h, w)));
        for (int k = 0; k < w; ++k) {
            wr[size_t(k)] = twr.tw[size_t(k)].real();
            wi[size_t(k)] = twr.tw[size_t(k)].imag();
        }
        for (int y = 0; y < h; ++y)
            fft_pow2_lanes(re.data() + size_t(y) * w * c, im.data() + size_t(y) * w * c, w,
                           size_t(c), c, wr.data(), wi.data());
        for (int k = 0; k < h; ++k) {
            wr[size_t(k)] = twc.tw[size_t(k)].real();
            wi[size_t(k)] = twc.tw[size_t(k)].imag();
        }
        for (int x = 0; x < w; ++x)
            fft_pow2_lanes(re.data() + size_t(x) * c, im.data() + size_t(x) * c, h,
                           size_t(w) * c, c, wr.data(), wi.data());
        return;
    }
    std::vector<std::complex<T>> line(std::max(h, w)), scratch(std::max(h, w));
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h; ++y) { // rows
            const size_t base = (size_t(y) * w) * c + ch;
            for (int x = 0; x < w; ++x)
                line[x] = {re[base + size_t(x) * c], im[base + size_t(x) * c]};
            transform_line(line.data(), scratch.data(), w, twr);
            for (int x = 0; x < w; ++x) {
                re[base + size_t(x) * c] = line[x].real();
                im[base + size_t(x) * c] = line[x].imag();
            }
        }
        for (int x = 0; x < w; ++x) { // columns
            const size_t base = size_t(x) * c + ch;
            const size_t stride = size_t(w) * c;
            for (int y = 0; y < h; ++y)
                line[y] = {re[base + y * stride], im[base + y * stride]};
            transform_line(line.data(), scratch.data(), h, twc);
            for (int y = 0; y < h; ++y) {
                re[base + y * stride] = line[y].real();
                im[base + y * stride] = line[y].imag();
            }
        }
    }
}

} // namespace fftdetail

/// Unnormalized forward 2-D DFT, per channel.
template <typename T>
ComplexGrid<T> fft2(const Grid<T>& x) {
    if (x.h < 1 || x.w < 1) throw ShapeError("fft2: empty grid");
    ComplexGrid<T> out(x.h, x.w, x.c);
    out.re = x.v;
    fftdetail::transform2d(out.re, out.im, x.h, x.w, x.c, -1);
    return out;
}

/// Real part of the normalized (1/(H*W)) inverse 2-D DFT. The imaginary
/// residue is dropped; pass imag_residue_max to learn how large it was.
template <typename T>
Grid<T> ifft2(const ComplexGrid<T>& x, T* imag_residue_max = nullptr) {
    std::vector<T> re = x.re, im = x.im;
    fftdetail::transform2d(re, im, x.h, x.w, x.c, +1);
    const T norm = T(1) / (T(x.h) * T(x.w));
    Grid<T> out(x.h, x.w, x.c);
    T resid = 0;
    for (size_t i = 0; i < re.size(); ++i) {
        out.v[i] = re[i] * norm;
        resid = std::max(resid, std::abs(im[i] * norm));
    }
    if (imag_residue_max) *imag_residue_max = resid;
    return out;
}

// Phase is treated as undefined, and set to 0, where the magnitude is zero
// or at floating-point cancellation scale relative to the grid's largest
// bin. Spectra produced by exact-ratio resampling contain structurally zero
// bins whose residue is rounding noise; without the relative floor their
// "phase" would be noise too.
constexpr double kPolarFloorAbs = 1e-8;
constexpr double kPolarFloorRel = 1e-7;

// Near the negative real axis the phase angle folds between +pi and -pi on
// the sign of im. Self-conjugate bins of a real signal's spectrum (DC and
// Nyquist rows) carry im = 0 up to rounding, so a negative bin's fold side
// would be rounding noise; within this relative band of the axis the phase
// is pinned to -pi.
constexpr double kPolarFoldRel = 1e-6;

template <typename T>
T polar_phase_floor(T max_mag) {
    return std::max(T(kPolarFloorAbs), T(kPolarFloorRel) * max_mag);
}

/// Cartesian -> polar. Near-zero magnitude yields phase 0; an atan2 result
/// of exactly +pi is folded to -pi so phases live in [-pi, pi).
template <typename T>
PolarGrid<T> to_polar(const ComplexGrid<T>& x) {
    PolarGrid<T> p(x.h, x.w, x.c);
    const T pi = T(M_PI);
    T max_mag = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        const T re = x.re[i], im = x.im[i];
        const T a = std::sqrt(re * re + im * im);
        p.mag[i] = a;
        max_mag = std::max(max_mag, a);
    }
    const T floor = polar_phase_floor(max_mag);
    for (size_t i = 0; i < x.size(); ++i) {
        if (p.mag[i] < floor) {
            p.phase[i] = T(0);
        } else if (x.re[i] < T(0) && std::abs(x.im[i]) < T(kPolarFoldRel) * p.mag[i]) {
            p.phase[i] = -pi;
        } else {
            T ph = FastTrig<T>::atan2(x.im[i], x.re[i]);
            if (ph >= pi) ph = -pi;
            p.phase[i] = ph;
        }
    }
    return p;
}

template <typename T>
ComplexGrid<T> from_polar(const PolarGrid<T>& p) {
    ComplexGrid<T> z(p.h, p.w, p.c);
    for (size_t i = 0; i < p.size(); ++i) {
        z.re[i] = p.mag[i] * FastTrig<T>::cos(p.phase[i]);
        z.im[i] = p.mag[i] * FastTrig<T>::sin(p.phase[i]);
    }
    return z;
}

} // namespace edno

#endif
