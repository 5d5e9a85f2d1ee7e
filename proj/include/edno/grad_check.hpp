#ifndef EDNO_GRAD_CHECK_HPP
#define EDNO_GRAD_CHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "edno/tape.hpp"

namespace edno {

struct GradCheckRow {
    std::string key;
    double max_abs_err = 0;
    double max_rel_err = 0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GradCheckRow> rows;
    double max_rel_err = 0;
    double tolerance = 0;
    bool pass = true;

    std::string to_string() const {
        std::string s;
        for (const auto& r : rows)
            s += (r.pass ? "  ok   " : "  FAIL ") + r.key + "  rel=" +
                 std::to_string(r.max_rel_err) + "\n";
        s += pass ? "gradcheck PASS" : "gradcheck FAIL";
        s += " (max rel " + std::to_string(max_rel_err) + ", tol " +
             std::to_string(tolerance) + ")\n";
        return s;
    }
};

/// Compares analytic gradients against central finite differences for every
/// element of every parameter block.
///
/// The loss surface is piecewise smooth: ReLU and l1 kinks, and the 2*pi
/// fold where a spectrum bin's phase crosses +-pi, are crossed by a finite
/// step with small but nonzero probability. A crossing artifact shrinks
/// away as the step does, while a wrong analytic gradient stays put, so an
/// element that disagrees at the base step is retried at step/8 and step/64
/// and the finest difference is kept.
///
/// The relative error is normalized per block: max|analytic - fd| divided by
/// the larger of the two blocks' max magnitudes. Blocks where both sides are
/// below `atol` count as matching; an exactly-zero true gradient (for
/// example a bias feeding instance norm) would otherwise be compared against
/// finite-difference roundoff noise.
///
/// `record` must rebuild the same scalar computation from scratch on the
/// given tape each time it is called. Intended for double precision; in
/// single precision the loss quantization dominates the step.
template <typename T>
GradCheckReport grad_check(
    const std::function<ValueId(Tape<T>&, const ParamStore<T>&)>& record,
    ParamStore<T>& params, T step, double tolerance, double atol = 1e-9) {
    GradCheckReport rep;
    rep.tolerance = tolerance;

    Tape<T> tape(&params);
    const ValueId loss = record(tape, params);
    const GradStore<T> analytic = tape.backward(loss);

    auto eval_at = [&](Block<T>& block, size_t i, T delta) {
        const T saved = block.v[i];
        block.v[i] = saved + delta;
        Tape<T> t(&params);
        const double l = double(t.value(record(t, params)).v[0]);
        block.v[i] = saved;
        return l;
    };

    for (auto& [key, block] : params.blocks()) {
        const Block<T>& ag = analytic.at(key);
        GradCheckRow row;
        row.key = key;
        double max_a = 0, max_f = 0, max_diff = 0;
        for (size_t i = 0; i < block.size(); ++i) {
            const double a = double(ag.v[i]);
            double fd = 0;
            bool first = true;
            for (int refine = 0; refine < 3; ++refine) {
                const T s = step / T(refine == 0 ? 1 : refine == 1 ? 8 : 64);
                const double f =
                    (eval_at(block, i, s) - eval_at(block, i, -s)) / (2.0 * double(s));
                if (first || std::abs(a - f) < std::abs(a - fd)) fd = f;
                first = false;
                if (std::abs(a - fd) <= tolerance * std::max({std::abs(a), std::abs(fd), atol}))
                    break;
            }
            max_a = std::max(max_a, std::abs(a));
            max_f = std::max(max_f, std::abs(fd));
            max_diff = std::max(max_diff, std::abs(a - fd));
        }
        row.max_abs_err = max_diff;
        row.max_rel_err =
            (max_a < atol && max_f < atol) ? 0.0 : max_diff / std::max(max_a, max_f);
        row.pass = row.max_rel_err < tolerance;
        rep.max_rel_err = std::max(rep.max_rel_err, row.max_rel_err);
        rep.pass = rep.pass && row.pass;
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

} // namespace edno

#endif
