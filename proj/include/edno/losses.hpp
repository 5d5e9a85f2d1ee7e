#ifndef EDNO_LOSSES_HPP
#define EDNO_LOSSES_HPP

#include "edno/fft.hpp"
#include "edno/tape.hpp"

// Hybrid objective: mean-l1 in the pixel domain plus lambda times mean-l1 on
// the complex spectrum difference. Both terms are means, not sums, so lambda
// keeps the same meaning at every resolution.

namespace edno {

template <typename T>
double loss_spatial(const Grid<T>& h, const Grid<T>& g) {
    if (!h.same_shape(g)) throw ShapeError("loss_spatial: shape mismatch");
    double acc = 0;
    for (size_t i = 0; i < h.size(); ++i) acc += std::abs(double(h.v[i]) - double(g.v[i]));
    return acc / double(h.size());
}

/// Mean complex modulus of F(h) - F(g), averaged over bins and channels.
template <typename T>
double loss_frequency(const Grid<T>& h, const Grid<T>& g) {
    if (!h.same_shape(g)) throw ShapeError("loss_frequency: shape mismatch");
    const ComplexGrid<T> fh = fft2(h), fg = fft2(g);
    double acc = 0;
    for (size_t i = 0; i < fh.size(); ++i) {
        const double dre = double(fh.re[i]) - double(fg.re[i]);
        const double dim = double(fh.im[i]) - double(fg.im[i]);
        acc += std::sqrt(dre * dre + dim * dim);
    }
    return acc / double(fh.size());
}

template <typename T>
double loss_total(const Grid<T>& h, const Grid<T>& g, double lambda) {
    return loss_spatial(h, g) + lambda * loss_frequency(h, g);
}

// Tape variants, for training. `target` is typically a constant leaf.

template <typename T>
ValueId loss_spatial(Tape<T>& tape, ValueId h, ValueId target) {
    return tape.mean(tape.abs(tape.sub(h, target)));
}

template <typename T>
ValueId loss_frequency(Tape<T>& tape, ValueId h, ValueId target) {
    auto [hre, him] = tape.fft2(h);
    auto [gre, gim] = tape.fft2(target);
    return tape.mean(tape.hypot(tape.sub(hre, gre), tape.sub(him, gim)));
}

template <typename T>
ValueId loss_total(Tape<T>& tape, ValueId h, ValueId target, T lambda) {
    ValueId spa = loss_spatial(tape, h, target);
    if (lambda == T(0)) return spa;
    return tape.add(spa, tape.affine(loss_frequency(tape, h, target), lambda, T(0)));
}

} // namespace edno

#endif
