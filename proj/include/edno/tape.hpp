#ifndef EDNO_TAPE_HPP
#define EDNO_TAPE_HPP

#include <cstdint>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "edno/fft.hpp"
#include "edno/grid.hpp"
#include "edno/nn_ops.hpp"
#include "edno/param_store.hpp"

// Reverse-mode differentiation over the grid op set. Values are grids; each
// recorded node owns one op application and may produce one or two outputs
// (the transforms and the polar conversions are two-output). Forward values
// are computed eagerly at record time; backward replays the tape in reverse
// and accumulates parameter gradients into a GradStore.
//
// Parameters enter ops by key, resolved against the ParamStore the tape was
// bound to. The store must stay unchanged between recording and backward().
//
// Differentiation conventions (the non-obvious cases):
//   - fft2 / ifft2_real are linear; their adjoints are the opposite-sign
//     transforms, with the 1/(H*W) factor staying on the inverse side.
//   - to_polar gradients are zeroed where the forward pass clamped the
//     phase (magnitude below the absolute/relative polar floor); the phase
//     is undefined there and 1/A^2 terms would explode. hypot gradients use
//     the absolute floor only.
//   - relu and abs use subgradient 0 at x = 0.

namespace edno {

using ValueId = int32_t;

constexpr double kPolarGradEps = 1e-8;

template <typename T>
class Tape {
public:
    explicit Tape(const ParamStore<T>* params = nullptr) : params_(params) {}

    // ---- leaves ----

    /// Non-differentiable input.
    ValueId constant(Grid<T> g) {
        Node n;
        n.kind = Op::kConst;
        return push1(n, std::move(g), false);
    }

    /// A 3-d parameter block (dims h, w, c) exposed as a differentiable leaf.
    ValueId param_grid(const std::string& key) {
        const Block<T>& b = fetch(key);
        if (b.dims.size() != 3) throw ShapeError("param_grid: block " + key + " is not 3-d");
        Grid<T> g(int(b.dims[0]), int(b.dims[1]), int(b.dims[2]));
        g.v = b.v;
        Node n;
        n.kind = Op::kParamLeaf;
        n.wkey = key;
        return push1(n, std::move(g), true);
    }

    // ---- neural primitives ----

    ValueId conv1x1(ValueId x, const std::string& wkey, const std::string& bkey = "") {
        Node n;
        n.kind = Op::kConv1x1;
        n.in = {x};
        n.wkey = wkey;
        n.bkey = bkey;
        Grid<T> y = edno::conv1x1(val(x), fetch(wkey), bkey.empty() ? nullptr : &fetch(bkey));
        return push1(n, std::move(y), true);
    }

    ValueId conv3x3(ValueId x, const std::string& wkey, const std::string& bkey = "") {
        Node n;
        n.kind = Op::kConv3x3;
        n.in = {x};
        n.wkey = wkey;
        n.bkey = bkey;
        Grid<T> y = conv3x3_reflect(val(x), fetch(wkey), bkey.empty() ? nullptr : &fetch(bkey));
        return push1(n, std::move(y), true);
    }

    ValueId depthwise3x3(ValueId x, const std::string& kkey) {
        Node n;
        n.kind = Op::kDepthwise;
        n.in = {x};
        n.wkey = kkey;
        Grid<T> y = depthwise3x3_reflect(val(x), fetch(kkey));
        return push1(n, std::move(y), true);
    }

    ValueId instance_norm(ValueId x, T eps = T(1e-5)) {
        const Grid<T>& xin = val(x);
        if (size_t(xin.h) * xin.w < 2)
            throw ShapeError("instance_norm: needs >= 2 spatial samples");
        Node n;
        n.kind = Op::kInstanceNorm;
        n.in = {x};
        const int C = xin.c;
        const size_t npx = size_t(xin.h) * xin.w;
        std::vector<double> mean(C, 0.0), var(C, 0.0);
        for (size_t p = 0; p < npx; ++p) {
            const T* xp = xin.v.data() + p * C;
            for (int c = 0; c < C; ++c) mean[c] += xp[c];
        }
        for (int c = 0; c < C; ++c) mean[c] /= double(npx);
        for (size_t p = 0; p < npx; ++p) {
            const T* xp = xin.v.data() + p * C;
            for (int c = 0; c < C; ++c) {
                const double d = xp[c] - mean[c];
                var[c] += d * d;
            }
        }
        n.ch_a.resize(C);
        n.ch_b.resize(C);
        for (int c = 0; c < C; ++c) {
            n.ch_a[c] = T(mean[c]);
            n.ch_b[c] = T(1.0 / std::sqrt(var[c] / double(npx) + double(eps)));
        }
        Grid<T> y(xin.h, xin.w, C);
        for (size_t p = 0; p < npx; ++p) {
            const T* xp = xin.v.data() + p * C;
            T* yp = y.v.data() + p * C;
            for (int c = 0; c < C; ++c) yp[c] = (xp[c] - n.ch_a[c]) * n.ch_b[c];
        }
        return push1(n, std::move(y), needs(x));
    }

    ValueId relu(ValueId x) {
        Node n;
        n.kind = Op::kRelu;
        n.in = {x};
        return push1(n, edno::relu(val(x)), needs(x));
    }

    ValueId sigmoid(ValueId x) {
        Node n;
        n.kind = Op::kSigmoid;
        n.in = {x};
        return push1(n, edno::sigmoid(val(x)), needs(x));
    }

    ValueId bilinear(ValueId x, const std::vector<std::pair<T, T>>& queries, int out_h,
                     int out_w) {
        const Grid<T>& xin = val(x);
        if (queries.size() != size_t(out_h) * out_w)
            throw ShapeError("bilinear: query count != out_h*out_w");
        Node n;
        n.kind = Op::kBilinear;
        n.in = {x};
        n.taps.reserve(queries.size());
        Grid<T> y(out_h, out_w, xin.c);
        const int C = xin.c;
        for (size_t q = 0; q < queries.size(); ++q) {
            const auto t = bilinear_tap(queries[q].first, queries[q].second, xin.h, xin.w);
            n.taps.push_back(t);
            const T w00 = (T(1) - t.fy) * (T(1) - t.fx), w01 = (T(1) - t.fy) * t.fx;
            const T w10 = t.fy * (T(1) - t.fx), w11 = t.fy * t.fx;
            const T* p00 = xin.px(t.y0, t.x0);
            const T* p01 = xin.px(t.y0, t.x1);
            const T* p10 = xin.px(t.y1, t.x0);
            const T* p11 = xin.px(t.y1, t.x1);
            T* yp = y.v.data() + q * C;
            for (int c = 0; c < C; ++c)
                yp[c] = w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
        }
        return push1(n, std::move(y), needs(x));
    }

    // ---- elementwise / shape ----

    ValueId add(ValueId a, ValueId b) { return binary(Op::kAdd, a, b); }
    ValueId sub(ValueId a, ValueId b) { return binary(Op::kSub, a, b); }
    ValueId mul(ValueId a, ValueId b) { return binary(Op::kMul, a, b); }

    /// y = scale * x + shift
    ValueId affine(ValueId x, T scale, T shift) {
        Node n;
        n.kind = Op::kAffine;
        n.in = {x};
        n.a = scale;
        n.b = shift;
        const Grid<T>& xin = val(x);
        Grid<T> y(xin.h, xin.w, xin.c);
        for (size_t i = 0; i < xin.size(); ++i) y.v[i] = scale * xin.v[i] + shift;
        return push1(n, std::move(y), needs(x));
    }

    ValueId abs(ValueId x) {
        Node n;
        n.kind = Op::kAbs;
        n.in = {x};
        const Grid<T>& xin = val(x);
        Grid<T> y(xin.h, xin.w, xin.c);
        for (size_t i = 0; i < xin.size(); ++i) y.v[i] = std::abs(xin.v[i]);
        return push1(n, std::move(y), needs(x));
    }

    /// Mean over all elements, as a 1x1x1 grid.
    ValueId mean(ValueId x) {
        Node n;
        n.kind = Op::kMean;
        n.in = {x};
        const Grid<T>& xin = val(x);
        double acc = 0;
        for (T v : xin.v) acc += v;
        Grid<T> y(1, 1, 1);
        y.v[0] = T(acc / double(xin.size()));
        return push1(n, std::move(y), needs(x));
    }

    ValueId concat_c(ValueId a, ValueId b) {
        const Grid<T>&ga = val(a), &gb = val(b);
        if (ga.h != gb.h || ga.w != gb.w)
            throw ShapeError("concat_c: spatial dims differ: " + ga.shape_str() + " vs " +
                             gb.shape_str());
        Node n;
        n.kind = Op::kConcatC;
        n.in = {a, b};
        Grid<T> y(ga.h, ga.w, ga.c + gb.c);
        const size_t npx = size_t(ga.h) * ga.w;
        for (size_t p = 0; p < npx; ++p) {
            T* yp = y.v.data() + p * y.c;
            const T* pa = ga.v.data() + p * ga.c;
            const T* pb = gb.v.data() + p * gb.c;
            for (int c = 0; c < ga.c; ++c) yp[c] = pa[c];
            for (int c = 0; c < gb.c; ++c) yp[ga.c + c] = pb[c];
        }
        return push1(n, std::move(y), needs(a) || needs(b));
    }

    // ---- frequency domain ----

    std::pair<ValueId, ValueId> fft2(ValueId x) {
        Node n;
        n.kind = Op::kFft2;
        n.in = {x};
        ComplexGrid<T> z = edno::fft2(val(x));
        Grid<T> re(z.h, z.w, z.c), im(z.h, z.w, z.c);
        re.v = std::move(z.re);
        im.v = std::move(z.im);
        return push2(n, std::move(re), std::move(im), needs(x));
    }

    ValueId ifft2_real(ValueId re, ValueId im) {
        const Grid<T>&gre = val(re), &gim = val(im);
        require_same(gre, gim, "ifft2_real");
        Node n;
        n.kind = Op::kIfft2Real;
        n.in = {re, im};
        ComplexGrid<T> z(gre.h, gre.w, gre.c);
        z.re = gre.v;
        z.im = gim.v;
        return push1(n, edno::ifft2(z), needs(re) || needs(im));
    }

    std::pair<ValueId, ValueId> to_polar(ValueId re, ValueId im) {
        const Grid<T>&gre = val(re), &gim = val(im);
        require_same(gre, gim, "to_polar");
        Node n;
        n.kind = Op::kToPolar;
        n.in = {re, im};
        ComplexGrid<T> z(gre.h, gre.w, gre.c);
        z.re = gre.v;
        z.im = gim.v;
        PolarGrid<T> p = edno::to_polar(z);
        Grid<T> mag(gre.h, gre.w, gre.c), ph(gre.h, gre.w, gre.c);
        mag.v = std::move(p.mag);
        ph.v = std::move(p.phase);
        return push2(n, std::move(mag), std::move(ph), needs(re) || needs(im));
    }

    std::pair<ValueId, ValueId> from_polar(ValueId mag, ValueId phase) {
        const Grid<T>&gm = val(mag), &gp = val(phase);
        require_same(gm, gp, "from_polar");
        Node n;
        n.kind = Op::kFromPolar;
        n.in = {mag, phase};
        Grid<T> re(gm.h, gm.w, gm.c), im(gm.h, gm.w, gm.c);
        for (size_t i = 0; i < gm.size(); ++i) {
            re.v[i] = gm.v[i] * FastTrig<T>::cos(gp.v[i]);
            im.v[i] = gm.v[i] * FastTrig<T>::sin(gp.v[i]);
        }
        return push2(n, std::move(re), std::move(im), needs(mag) || needs(phase));
    }

    /// Complex modulus sqrt(re^2 + im^2), the magnitude half of to_polar.
    ValueId hypot(ValueId re, ValueId im) {
        const Grid<T>&gre = val(re), &gim = val(im);
        require_same(gre, gim, "hypot");
        Node n;
        n.kind = Op::kHypot;
        n.in = {re, im};
        Grid<T> y(gre.h, gre.w, gre.c);
        for (size_t i = 0; i < gre.size(); ++i)
            y.v[i] = std::sqrt(gre.v[i] * gre.v[i] + gim.v[i] * gim.v[i]);
        return push1(n, std::move(y), needs(re) || needs(im));
    }

    // ---- access ----

    const Grid<T>& value(ValueId id) const { return vals_[size_t(id)]; }
    size_t node_count() const { return nodes_.size(); }
    bool needs_grad(ValueId id) const { return needs_[size_t(id)]; }

    /// Reverse pass from a scalar loss. Returns gradients for every key in
    /// the bound ParamStore; keys the loss does not depend on stay zero.
    GradStore<T> backward(ValueId loss) const {
        if (nodes_.empty()) throw ShapeError("backward: empty tape");
        const Grid<T>& lg = val(loss);
        if (lg.size() != 1) throw ShapeError("backward: loss must be scalar, got " + lg.shape_str());
        if (!params_) throw ConfigError("backward: tape has no bound ParamStore");

        GradStore<T> grads(*params_);
        std::vector<Grid<T>> adj(vals_.size());
        adj[size_t(loss)] = Grid<T>(1, 1, 1);
        adj[size_t(loss)].v[0] = T(1);

        for (size_t ni = nodes_.size(); ni-- > 0;) {
            const Node& n = nodes_[ni];
            bool any = false;
            for (ValueId o : n.out)
                if (!adj[size_t(o)].v.empty()) any = true;
            if (!any) continue;
            backward_node(n, adj, grads);
            for (ValueId o : n.out) adj[size_t(o)] = Grid<T>(); // release
        }
        return grads;
    }

private:
    enum class Op {
        kConst,
        kParamLeaf,
        kConv1x1,
        kConv3x3,
        kDepthwise,
        kInstanceNorm,
        kRelu,
        kSigmoid,
        kBilinear,
        kAdd,
        kSub,
        kMul,
        kAffine,
        kAbs,
        kMean,
        kConcatC,
        kFft2,
        kIfft2Real,
        kToPolar,
        kFromPolar,
        kHypot,
    };

    struct Node {
        Op kind;
        std::vector<ValueId> in;
        std::vector<ValueId> out;
        std::string wkey, bkey;
        T a = 0, b = 0;
        std::vector<T> ch_a, ch_b; // instance-norm mean / inv-std per channel
        std::vector<BilinearTap<T>> taps;
    };

    const ParamStore<T>* params_;
    std::vector<Node> nodes_;
    // deque keeps value references stable while new nodes are recorded
    std::deque<Grid<T>> vals_;
    std::vector<bool> needs_;

    const Grid<T>& val(ValueId id) const { return vals_[size_t(id)]; }
    bool needs(ValueId id) const { return needs_[size_t(id)]; }

    const Block<T>& fetch(const std::string& key) const {
        if (!params_) throw ConfigError("tape op uses parameter key '" + key +
                                        "' but no ParamStore is bound");
        return params_->at(key);
    }

    static void require_same(const Grid<T>& a, const Grid<T>& b, const char* op) {
        if (!a.same_shape(b))
            throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
    }

    ValueId push1(Node& n, Grid<T>&& y, bool ng) {
        const ValueId id = ValueId(vals_.size());
        vals_.push_back(std::move(y));
        needs_.push_back(ng);
        n.out = {id};
        nodes_.push_back(std::move(n));
        return id;
    }

    std::pair<ValueId, ValueId> push2(Node& n, Grid<T>&& y0, Grid<T>&& y1, bool ng) {
        const ValueId a = ValueId(vals_.size());
        vals_.push_back(std::move(y0));
        needs_.push_back(ng);
        const ValueId b = ValueId(vals_.size());
        vals_.push_back(std::move(y1));
        needs_.push_back(ng);
        n.out = {a, b};
        nodes_.push_back(std::move(n));
        return {a, b};
    }

    ValueId binary(Op op, ValueId a, ValueId b) {
        const Grid<T>&ga = val(a), &gb = val(b);
        require_same(ga, gb, op == Op::kAdd ? "add" : op == Op::kSub ? "sub" : "mul");
        Node n;
        n.kind = op;
        n.in = {a, b};
        Grid<T> y(ga.h, ga.w, ga.c);
        if (op == Op::kAdd)
            for (size_t i = 0; i < ga.size(); ++i) y.v[i] = ga.v[i] + gb.v[i];
        else if (op == Op::kSub)
            for (size_t i = 0; i < ga.size(); ++i) y.v[i] = ga.v[i] - gb.v[i];
        else
            for (size_t i = 0; i < ga.size(); ++i) y.v[i] = ga.v[i] * gb.v[i];
        return push1(n, std::move(y), needs(a) || needs(b));
    }

    // adjoint accumulation helper: adj[id] += g (allocating on first touch)
    static void acc(std::vector<Grid<T>>& adj, ValueId id, const Grid<T>& shape_like,
                    size_t i, T g) {
        Grid<T>& a = adj[size_t(id)];
        if (a.v.empty())
            a = Grid<T>(shape_like.h, shape_like.w, shape_like.c);
        a.v[i] += g;
    }

    Grid<T>& adj_buf(std::vector<Grid<T>>& adj, ValueId id) const {
        Grid<T>& a = adj[size_t(id)];
        if (a.v.empty()) {
            const Grid<T>& v = val(id);
            a = Grid<T>(v.h, v.w, v.c);
        }
        return a;
    }

    void backward_node(const Node& n, std::vector<Grid<T>>& adj, GradStore<T>& grads) const {
        switch (n.kind) {
            case Op::kConst:
                break;
            case Op::kParamLeaf: {
                const Grid<T>& g = adj[size_t(n.out[0])];
                Block<T>& dst = grads.at(n.wkey);
                for (size_t i = 0; i < g.size(); ++i) dst.v[i] += g.v[i];
                break;
            }
            case Op::kConv1x1:
                bw_conv1x1(n, adj, grads);
                break;
            case Op::kConv3x3:
                bw_conv3x3(n, adj, grads);
                break;
            case Op::kDepthwise:
                bw_depthwise(n, adj, grads);
                break;
            case Op::kInstanceNorm:
                bw_instance_norm(n, adj);
                break;
            case Op::kRelu: {
                if (!needs(n.in[0])) break;
                const Grid<T>& g = adj[size_t(n.out[0])];
                const Grid<T>& x = val(n.in[0]);
                Grid<T>& dx = adj_buf(adj, n.in[0]);
                for (size_t i = 0; i < g.size(); ++i)
                    if (x.v[i] > T(0)) dx.v[i] += g.v[i];
                break;
            }
            case Op::kSigmoid: {
                if (!needs(n.in[0])) break;
                const Grid<T>& g = adj[size_t(n.out[0])];
                const Grid<T>& y = val(n.out[0]);
                Grid<T>& dx = adj_buf(adj, n.in[0]);
                for (size_t i = 0; i < g.size(); ++i)
                    dx.v[i] += g.v[i] * y.v[i] * (T(1) - y.v[i]);
                break;
            }
            case Op::kBilinear: {
                if (!needs(n.in[0])) break;
                const Grid<T>& g = adj[size_t(n.out[0])];
                const Grid<T>& x = val(n.in[0]);
                Grid<T>& dx = adj_buf(adj, n.in[0]);
                const int C = x.c;
                for (size_t q = 0; q < n.taps.size(); ++q) {
                    const auto& t = n.taps[q];
                    const T w00 = (T(1) - t.fy) * (T(1) - t.fx), w01 = (T(1) - t.fy) * t.fx;
                    const T w10 = t.fy * (T(1) - t.fx), w11 = t.fy * t.fx;
                    const T* gp = g.v.data() + q * C;
                    T* d00 = dx.px(t.y0, t.x0);
                    T* d01 = dx.px(t.y0, t.x1);
                    T* d10 = dx.px(t.y1, t.x0);
                    T* d11 = dx.px(t.y1, t.x1);
                    for (int c = 0; c < C; ++c) {
                        d00[c] += w00 * gp[c];
                        d01[c] += w01 * gp[c];
                        d10[c] += w10 * gp[c];
                        d11[c] += w11 * gp[c];
                    }
                }
                break;
            }
            case Op::kAdd:
            case Op::kSub: {
                const Grid<T>& g = adj[size_t(n.out[0])];
                if (needs(n.in[0])) {
                    Grid<T>& da = adj_buf(adj, n.in[0]);
                    for (size_t i = 0; i < g.size(); ++i) da.v[i] += g.v[i];
                }
                if (needs(n.in[1])) {
                    Grid<T>& db = adj_buf(adj, n.in[1]);
                    const T s = n.kind == Op::kSub ? T(-1) : T(1);
                    for (size_t i = 0; i < g.size(); ++i) db.v[i] += s * g.v[i];
                }
                break;
            }
            case Op::kMul: {
                const Grid<T>& g = adj[size_t(n.out[0])];
                if (needs(n.in[0])) {
                    const Grid<T>& b = val(n.in[1]);
                    Grid<T>& da = adj_buf(adj, n.in[0]);
                    for (size_t i = 0; i < g.size(); ++i) da.v[i] += g.v[i] * b.v[i];
                }
                if (needs(n.in[1])) {
                    const Grid<T>& a = val(n.in[0]);
                    Grid<T>& db = adj_buf(adj, n.in[1]);
                    for (size_t i = 0; i < g.size(); ++i) db.v[i] += g.v[i] * a.v[i];
                }
                break;
            }
            case Op::kAffine: {
                if (!needs(n.in[0])) break;
                const Grid<T>& g = adj[size_t(n.out[0])];
                Grid<T>& dx = adj_buf(adj, n.in[0]);
                for (size_t i = 0; i < g.size(); ++i) dx.v[i] += n.a * g.v[i];
                break;
            }
            case Op::kAbs: {
                if (!needs(n.in[0])) break;
                const Grid<T>& g = adj[size_t(n.out[0])];
                const Grid<T>& x = val(n.in[0]);
                Grid<T>& dx = adj_buf(adj, n.in[0]);
                for (size_t i = 0; i < g.size(); ++i) {
                    if (x.v[i] > T(0))
                        dx.v[i] += g.v[i];
                    else if (x.v[i] < T(0))
                        dx.v[i] -= g.v[i];
                }
                break;
            }
            case Op::kMean: {
                if (!needs(n.in[0])) break;
                const T g = adj[size_t(n.out[0])].v[0];
                const Grid<T>& x = val(n.in[0]);
                Grid<T>& dx = adj_buf(adj, n.in[0]);
                const T s = g / T(double(x.size()));
                for (size_t i = 0; i < dx.size(); ++i) dx.v[i] += s;
                break;
            }
            case Op::kConcatC: {
                const Grid<T>& g = adj[size_t(n.out[0])];
                const Grid<T>&a = val(n.in[0]), &b = val(n.in[1]);
                const size_t npx = size_t(a.h) * a.w;
                if (needs(n.in[0])) {
                    Grid<T>& da = adj_buf(adj, n.in[0]);
                    for (size_t p = 0; p < npx; ++p) {
                        const T* gp = g.v.data() + p * g.c;
                        T* dp = da.v.data() + p * a.c;
                        for (int c = 0; c < a.c; ++c) dp[c] += gp[c];
                    }
                }
                if (needs(n.in[1])) {
                    Grid<T>& db = adj_buf(adj, n.in[1]);
                    for (size_t p = 0; p < npx; ++p) {
                        const T* gp = g.v.data() + p * g.c + a.c;
                        T* dp = db.v.data() + p * b.c;
                        for (int c = 0; c < b.c; ++c) dp[c] += gp[c];
                    }
                }
                break;
            }
            case Op::kFft2: {
                if (!needs(n.in[0])) break;
                // adjoint of the unnormalized forward transform: real part of
                // the unnormalized opposite-sign transform of the adjoint pair
                const Grid<T>&gre = adj_or_zero(adj, n.out[0]), &gim = adj_or_zero(adj, n.out[1]);
                const Grid<T>& x = val(n.in[0]);
                std::vector<T> re = gre.v.empty() ? std::vector<T>(x.size(), T(0)) : gre.v;
                std::vector<T> im = gim.v.empty() ? std::vector<T>(x.size(), T(0)) : gim.v;
                fftdetail::transform2d(re, im, x.h, x.w, x.c, +1);
                Grid<T>& dx = adj_buf(adj, n.in[0]);
                for (size_t i = 0; i < dx.size(); ++i) dx.v[i] += re[i];
                break;
            }
            case Op::kIfft2Real: {
                const Grid<T>& g = adj[size_t(n.out[0])];
                std::vector<T> re = g.v;
                std::vector<T> im(g.size(), T(0));
                fftdetail::transform2d(re, im, g.h, g.w, g.c, -1);
                const T norm = T(1) / (T(g.h) * T(g.w));
                if (needs(n.in[0])) {
                    Grid<T>& dre = adj_buf(adj, n.in[0]);
                    for (size_t i = 0; i < dre.size(); ++i) dre.v[i] += re[i] * norm;
                }
                if (needs(n.in[1])) {
                    Grid<T>& dim = adj_buf(adj, n.in[1]);
                    for (size_t i = 0; i < dim.size(); ++i) dim.v[i] += im[i] * norm;
                }
                break;
            }
            case Op::kToPolar: {
                const Grid<T>&gm = adj_or_zero(adj, n.out[0]), &gp = adj_or_zero(adj, n.out[1]);
                const Grid<T>&re = val(n.in[0]), &im = val(n.in[1]);
                const Grid<T>& mag = val(n.out[0]);
                const bool nre = needs(n.in[0]), nim = needs(n.in[1]);
                if (!nre && !nim) break;
                Grid<T>* dre = nre ? &adj_buf(adj, n.in[0]) : nullptr;
                Grid<T>* dim = nim ? &adj_buf(adj, n.in[1]) : nullptr;
                // mirror the forward clamps: no gradient below the magnitude
                // floor, no phase gradient where the fold was pinned
                const T floor = polar_phase_floor(mag.max_abs());
                for (size_t i = 0; i < re.size(); ++i) {
                    const T a = mag.v[i];
                    if (a < floor) continue;
                    const T ga = gm.v.empty() ? T(0) : gm.v[i];
                    T gph = gp.v.empty() ? T(0) : gp.v[i];
                    if (re.v[i] < T(0) && std::abs(im.v[i]) < T(kPolarFoldRel) * a)
                        gph = T(0);
                    const T inv_a = T(1) / a;
                    const T inv_a2 = inv_a * inv_a;
                    if (dre) dre->v[i] += ga * re.v[i] * inv_a - gph * im.v[i] * inv_a2;
                    if (dim) dim->v[i] += ga * im.v[i] * inv_a + gph * re.v[i] * inv_a2;
                }
                break;
            }
            case Op::kFromPolar: {
                const Grid<T>&gre = adj_or_zero(adj, n.out[0]), &gim = adj_or_zero(adj, n.out[1]);
                const Grid<T>&mag = val(n.in[0]), &ph = val(n.in[1]);
                const Grid<T>&re = val(n.out[0]), &im = val(n.out[1]);
                const bool nm = needs(n.in[0]), np = needs(n.in[1]);
                if (!nm && !np) break;
                Grid<T>* dm = nm ? &adj_buf(adj, n.in[0]) : nullptr;
                Grid<T>* dp = np ? &adj_buf(adj, n.in[1]) : nullptr;
                for (size_t i = 0; i < mag.size(); ++i) {
                    const T gr = gre.v.empty() ? T(0) : gre.v[i];
                    const T gi = gim.v.empty() ? T(0) : gim.v[i];
                    const T a = mag.v[i];
                    T c, s;
                    if (a != T(0)) {
                        c = re.v[i] / a;
                        s = im.v[i] / a;
                    } else {
                        c = FastTrig<T>::cos(ph.v[i]);
                        s = FastTrig<T>::sin(ph.v[i]);
                    }
                    if (dm) dm->v[i] += gr * c + gi * s;
                    if (dp) dp->v[i] += gi * re.v[i] - gr * im.v[i];
                }
                break;
            }
            case Op::kHypot: {
                const Grid<T>& g = adj[size_t(n.out[0])];
                const Grid<T>&re = val(n.in[0]), &im = val(n.in[1]);
                const Grid<T>& y = val(n.out[0]);
                const bool nre = needs(n.in[0]), nim = needs(n.in[1]);
                if (!nre && !nim) break;
                Grid<T>* dre = nre ? &adj_buf(adj, n.in[0]) : nullptr;
                Grid<T>* dim = nim ? &adj_buf(adj, n.in[1]) : nullptr;
                for (size_t i = 0; i < re.size(); ++i) {
                    const T a = y.v[i];
                    if (double(a) < kPolarGradEps) continue;
                    const T s = g.v[i] / a;
                    if (dre) dre->v[i] += s * re.v[i];
                    if (dim) dim->v[i] += s * im.v[i];
                }
                break;
            }
        }
    }

    const Grid<T>& adj_or_zero(std::vector<Grid<T>>& adj, ValueId id) const {
        return adj[size_t(id)];
    }

    void bw_conv1x1(const Node& n, std::vector<Grid<T>>& adj, GradStore<T>& grads) const {
        const Grid<T>& g = adj[size_t(n.out[0])];
        const Grid<T>& x = val(n.in[0]);
        const Block<T>& w = fetch(n.wkey);
        const int co = int(w.dims[0]), ci = int(w.dims[1]);
        const size_t npx = size_t(x.h) * x.w;
        Block<T>& dw = grads.at(n.wkey);
        Block<T>* db = n.bkey.empty() ? nullptr : &grads.at(n.bkey);
        const bool nx = needs(n.in[0]);
        Grid<T>* dx = nx ? &adj_buf(adj, n.in[0]) : nullptr;
        for (size_t p = 0; p < npx; ++p) {
            const T* gp = g.v.data() + p * co;
            const T* xp = x.v.data() + p * ci;
            T* dxp = dx ? dx->v.data() + p * ci : nullptr;
            for (int o = 0; o < co; ++o) {
                const T go = gp[o];
                if (db) db->v[o] += go;
                const T* wr = w.v.data() + size_t(o) * ci;
                T* dwr = dw.v.data() + size_t(o) * ci;
                if (dxp) {
                    for (int i = 0; i < ci; ++i) {
                        dwr[i] += go * xp[i];
                        dxp[i] += go * wr[i];
                    }
                } else {
                    for (int i = 0; i < ci; ++i) dwr[i] += go * xp[i];
                }
            }
        }
    }

    void bw_conv3x3(const Node& n, std::vector<Grid<T>>& adj, GradStore<T>& grads) const {
        const Grid<T>& g = adj[size_t(n.out[0])];
        const Grid<T>& x = val(n.in[0]);
        const Block<T>& w = fetch(n.wkey);
        const int co = int(w.dims[0]), ci = int(w.dims[1]);
        const int H = x.h, W = x.w;
        const std::vector<T> wp = nndetail::pack_full3x3(w, co, ci); // (tap, co, ci)
        std::vector<T> dwp(wp.size(), T(0));
        Block<T>* db = n.bkey.empty() ? nullptr : &grads.at(n.bkey);
        const bool nx = needs(n.in[0]);
        Grid<T>* dx = nx ? &adj_buf(adj, n.in[0]) : nullptr;
        for (int h = 0; h < H; ++h) {
            for (int v = 0; v < W; ++v) {
                const T* gp = g.px(h, v);
                if (db)
                    for (int o = 0; o < co; ++o) db->v[o] += gp[o];
                for (int t = 0; t < 9; ++t) {
                    const int hh = reflect1(h + t / 3 - 1, H);
                    const int ww = reflect1(v + t % 3 - 1, W);
                    const T* xp = x.px(hh, ww);
                    T* dxp = dx ? dx->px(hh, ww) : nullptr;
                    const T* wt = wp.data() + size_t(t) * co * ci;
                    T* dwt = dwp.data() + size_t(t) * co * ci;
                    for (int o = 0; o < co; ++o) {
                        const T go = gp[o];
                        const T* wr = wt + size_t(o) * ci;
                        T* dwr = dwt + size_t(o) * ci;
                        if (dxp) {
                            for (int i = 0; i < ci; ++i) {
                                dwr[i] += go * xp[i];
                                dxp[i] += go * wr[i];
                            }
                        } else {
                            for (int i = 0; i < ci; ++i) dwr[i] += go * xp[i];
                        }
                    }
                }
            }
        }
        Block<T>& dw = grads.at(n.wkey);
        for (int o = 0; o < co; ++o)
            for (int i = 0; i < ci; ++i)
                for (int t = 0; t < 9; ++t)
                    dw.v[(size_t(o) * ci + i) * 9 + t] += dwp[(size_t(t) * co + o) * ci + i];
    }

    void bw_depthwise(const Node& n, std::vector<Grid<T>>& adj, GradStore<T>& grads) const {
        const Grid<T>& g = adj[size_t(n.out[0])];
        const Grid<T>& x = val(n.in[0]);
        const Block<T>& k = fetch(n.wkey);
        const int C = x.c, H = x.h, W = x.w;
        std::vector<T> kp(size_t(9) * C), dkp(size_t(9) * C, T(0));
        for (int c = 0; c < C; ++c)
            for (int t = 0; t < 9; ++t) kp[size_t(t) * C + c] = k.v[size_t(c) * 9 + t];
        const bool nx = needs(n.in[0]);
        Grid<T>* dx = nx ? &adj_buf(adj, n.in[0]) : nullptr;
        for (int h = 0; h < H; ++h) {
            for (int v = 0; v < W; ++v) {
                const T* gp = g.px(h, v);
                for (int t = 0; t < 9; ++t) {
                    const int hh = reflect1(h + t / 3 - 1, H);
                    const int ww = reflect1(v + t % 3 - 1, W);
                    const T* xp = x.px(hh, ww);
                    T* dxp = dx ? dx->px(hh, ww) : nullptr;
                    const T* kt = kp.data() + size_t(t) * C;
                    T* dkt = dkp.data() + size_t(t) * C;
                    if (dxp) {
                        for (int c = 0; c < C; ++c) {
                            dkt[c] += gp[c] * xp[c];
                            dxp[c] += gp[c] * kt[c];
                        }
                    } else {
                        for (int c = 0; c < C; ++c) dkt[c] += gp[c] * xp[c];
                    }
                }
            }
        }
        Block<T>& dk = grads.at(n.wkey);
        for (int c = 0; c < C; ++c)
            for (int t = 0; t < 9; ++t) dk.v[size_t(c) * 9 + t] += dkp[size_t(t) * C + c];
    }

    void bw_instance_norm(const Node& n, std::vector<Grid<T>>& adj) const {
        if (!needs(n.in[0])) return;
        const Grid<T>& g = adj[size_t(n.out[0])];
        const Grid<T>& xhat = val(n.out[0]); // output is the normalized value
        const int C = xhat.c;
        const size_t npx = size_t(xhat.h) * xhat.w;
        std::vector<double> s1(C, 0.0), s2(C, 0.0);
        for (size_t p = 0; p < npx; ++p) {
            const T* gp = g.v.data() + p * C;
            const T* hp = xhat.v.data() + p * C;
            for (int c = 0; c < C; ++c) {
                s1[c] += gp[c];
                s2[c] += gp[c] * hp[c];
            }
        }
        Grid<T>& dx = adj_buf(adj, n.in[0]);
        std::vector<T> m1(C), m2(C);
        for (int c = 0; c < C; ++c) {
            m1[c] = T(s1[c] / double(npx));
            m2[c] = T(s2[c] / double(npx));
        }
        for (size_t p = 0; p < npx; ++p) {
            const T* gp = g.v.data() + p * C;
            const T* hp = xhat.v.data() + p * C;
            T* dp = dx.v.data() + p * C;
            for (int c = 0; c < C; ++c)
                dp[c] += n.ch_b[c] * (gp[c] - m1[c] - hp[c] * m2[c]);
        }
    }
};

} // namespace edno

#endif
