#ifndef EDNO_ADAM_HPP
#define EDNO_ADAM_HPP

#include <cmath>

#include "edno/param_store.hpp"

namespace edno {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment blocks mirroring the parameters, plus the step count.
template <typename T>
struct AdamState {
    AdamConfig hp;
    int64_t t = 0;
    GradStore<T> m, v;

    explicit AdamState(const ParamStore<T>& params, AdamConfig hp_ = {})
        : hp(hp_), m(params), v(params) {}
};

/// Standard bias-corrected Adam update, in place. Deterministic given inputs.
template <typename T>
void adam_step(ParamStore<T>& params, const GradStore<T>& grads, AdamState<T>& st) {
    st.t += 1;
    const double bc1 = 1.0 - std::pow(st.hp.beta1, double(st.t));
    const double bc2 = 1.0 - std::pow(st.hp.beta2, double(st.t));
    for (auto& [key, p] : params.blocks()) {
        const Block<T>& g = grads.at(key);
        if (!p.same_dims(g)) throw ShapeError("adam_step: gradient shape mismatch for " + key);
        Block<T>& m = st.m.at(key);
        Block<T>& v = st.v.at(key);
        for (size_t i = 0; i < p.size(); ++i) {
            const double gi = double(g.v[i]);
            const double mi = st.hp.beta1 * double(m.v[i]) + (1.0 - st.hp.beta1) * gi;
            const double vi = st.hp.beta2 * double(v.v[i]) + (1.0 - st.hp.beta2) * gi * gi;
            m.v[i] = T(mi);
            v.v[i] = T(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            p.v[i] = T(double(p.v[i]) - st.hp.lr * mhat / (std::sqrt(vhat) + st.hp.eps));
        }
    }
}

} // namespace edno

#endif
