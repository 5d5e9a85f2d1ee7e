#ifndef EDNO_GRID_HPP
#define EDNO_GRID_HPP

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "edno/errors.hpp"

namespace edno {

/// Dense H x W x C grid of real scalars, row-major with the channel axis
/// innermost. Carries images (values nominally in [0,1]) and latent features
/// (unbounded). Immutable-by-convention: ops return new grids.
template <typename T>
struct Grid {
    int h = 0, w = 0, c = 0;
    std::vector<T> v;

    Grid() = default;
    Grid(int h_, int w_, int c_) : h(h_), w(w_), c(c_), v(size_t(h_) * w_ * c_, T(0)) {
        if (h_ <= 0 || w_ <= 0 || c_ <= 0)
            throw ShapeError("Grid dims must be positive");
    }

    size_t size() const { return v.size(); }
    bool same_shape(const Grid& o) const { return h == o.h && w == o.w && c == o.c; }

    T& at(int y, int x, int ch) { return v[(size_t(y) * w + x) * c + ch]; }
    const T& at(int y, int x, int ch) const { return v[(size_t(y) * w + x) * c + ch]; }

    /// Pointer to the channel vector at pixel (y, x).
    T* px(int y, int x) { return v.data() + (size_t(y) * w + x) * c; }
    const T* px(int y, int x) const { return v.data() + (size_t(y) * w + x) * c; }

    bool all_finite() const {
        for (T x : v)
            if (!std::isfinite(double(x))) return false;
        return true;
    }

    T max_abs() const {
        T m = 0;
        for (T x : v) m = std::max(m, std::abs(x));
        return m;
    }

    std::string shape_str() const {
        return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
    }
};

/// Frequency-domain counterpart of a Grid in Cartesian (re, im) form.
template <typename T>
struct ComplexGrid {
    int h = 0, w = 0, c = 0;
    std::vector<T> re, im;

    ComplexGrid() = default;
    ComplexGrid(int h_, int w_, int c_)
        : h(h_), w(w_), c(c_),
          re(size_t(h_) * w_ * c_, T(0)),
          im(size_t(h_) * w_ * c_, T(0)) {
        if (h_ <= 0 || w_ <= 0 || c_ <= 0)
            throw ShapeError("ComplexGrid dims must be positive");
    }

    size_t size() const { return re.size(); }
    size_t idx(int y, int x, int ch) const { return (size_t(y) * w + x) * c + ch; }
};

/// Polar form of a ComplexGrid: per-element magnitude >= 0 and phase in
/// [-pi, pi). Zero-magnitude elements carry phase 0 by convention.
template <typename T>
struct PolarGrid {
    int h = 0, w = 0, c = 0;
    std::vector<T> mag, phase;

    PolarGrid() = default;
    PolarGrid(int h_, int w_, int c_)
        : h(h_), w(w_), c(c_),
          mag(size_t(h_) * w_ * c_, T(0)),
          phase(size_t(h_) * w_ * c_, T(0)) {}

    size_t size() const { return mag.size(); }
};

/// Named parameter / gradient block with arbitrary dims, row-major.
template <typename T>
struct Block {
    std::vector<int64_t> dims;
    std::vector<T> v;

    Block() = default;
    explicit Block(std::vector<int64_t> d) : dims(std::move(d)) {
        int64_t n = 1;
        for (int64_t x : dims) n *= x;
        v.assign(size_t(n), T(0));
    }

    size_t size() const { return v.size(); }
    bool same_dims(const Block& o) const { return dims == o.dims; }
};

} // namespace edno

#endif
