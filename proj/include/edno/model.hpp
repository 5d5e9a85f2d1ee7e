#ifndef EDNO_MODEL_HPP
#define EDNO_MODEL_HPP

#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "edno/tape.hpp"

// The pansharpening operator: lifting of PAN and LR-MS onto a shared latent
// grid, T iterated frequency-domain feature interaction layers, projection
// back to bands, and a global residual over the bilinearly upsampled LR-MS.

namespace edno {

// Fixed gain on the fused magnitude before inversion (see EdnoModel::efil).
constexpr double kSpectralGainFactor = 1.0;

struct EdnoConfig {
    int channels = 32;   // latent width C
    int iterations = 4;  // kernel iterations T
    double scale = 4.0;  // PAN / LR-MS resolution ratio r
    int bands = 4;       // LR-MS spectral bands B
    double loss_weight = 0.1; // lambda on the frequency term

    // architectural ablations, at most one may be set
    bool vanilla_fno = false;    // I:   learned complex 1x1 instead of the polar path
    bool phase_only = false;     // II:  magnitude passes through untouched
    bool magnitude_only = false; // III: phase passes through untouched
    bool no_depthwise = false;   // IV:  drop the 3x3 depthwise stage in the magnitude path

    int ablation_flags() const {
        return int(vanilla_fno) + int(phase_only) + int(magnitude_only) + int(no_depthwise);
    }

    std::string variant_name() const {
        if (vanilla_fno) return "vanilla_fno";
        if (phase_only) return "phase_only";
        if (magnitude_only) return "magnitude_only";
        if (no_depthwise) return "no_depthwise";
        return "full";
    }

    void validate() const {
        if (channels < 1 || iterations < 1 || bands < 1)
            throw ConfigError("EdnoConfig: channels, iterations and bands must be >= 1");
        if (!(scale > 1.0)) throw ConfigError("EdnoConfig: scale must be > 1");
        if (loss_weight < 0.0) throw ConfigError("EdnoConfig: loss_weight must be >= 0");
        if (ablation_flags() > 1)
            throw ConfigError("EdnoConfig: at most one ablation flag may be set");
    }
};

/// One training or evaluation instance. The fusion target resolution is the
/// ground-truth grid when present, otherwise round(scale * lrms dims).
template <typename T>
struct SamplePair {
    Grid<T> pan;  // target_h x target_w x 1 (may differ under scale jitter)
    Grid<T> lrms; // h x w x bands
    std::optional<Grid<T>> gt;
    double scale = 0;

    std::pair<int, int> target_dims() const {
        if (gt) return {gt->h, gt->w};
        return {int(std::lround(scale * lrms.h)), int(std::lround(scale * lrms.w))};
    }
};

// ---------------------------------------------------------------------------
// Parameter layout
// ---------------------------------------------------------------------------

struct ParamSpec {
    std::string key;
    std::vector<int64_t> dims;
    bool is_weight; // weights get fan-in scaled init, biases start at zero
};

/// Canonical block table. Everything that needs to agree on shapes or
/// ordering (init, counting, checkpoints, the forward pass) derives from it.
///
/// Per-key shapes for channels C, bands B, iterations T:
///   enc.pan.c1 {C,1,3,3}+{C}   enc.pan.c2 {C,C,3,3}+{C}
///   enc.ms.c1  {C,B,3,3}+{C}   enc.ms.c2  {C,C,3,3}+{C}
///   lift.mix   {C,C+8}+{C}
///   it<t>.w    {C,C}+{C}                                  (all t in [0,T))
///   it<t>.efim {C,2C}+{C}                         (unless magnitude_only / vanilla_fno)
///   it<t>.ifim.mix {C,2C}+{C}, it<t>.ifim.dw {C,3,3},
///   it<t>.ifim.proj {C,C}+{C}                     (unless phase_only / vanilla_fno;
///                                                  dw dropped by no_depthwise)
///   it<t>.fno.re {C,2C}, it<t>.fno.im {C,2C}      (vanilla_fno only)
///   proj       {B,C}+{B}
inline std::vector<ParamSpec> param_layout(const EdnoConfig& cfg) {
    cfg.validate();
    const int64_t C = cfg.channels, B = cfg.bands;
    std::vector<ParamSpec> out;
    auto conv = [&out](const std::string& k, int64_t co, int64_t ci) {
        out.push_back({k + ".w", {co, ci, 3, 3}, true});
        out.push_back({k + ".b", {co}, false});
    };
    auto pw = [&out](const std::string& k, int64_t co, int64_t ci) {
        out.push_back({k + ".w", {co, ci}, true});
        out.push_back({k + ".b", {co}, false});
    };
    conv("enc.pan.c1", C, 1);
    conv("enc.pan.c2", C, C);
    conv("enc.ms.c1", C, B);
    conv("enc.ms.c2", C, C);
    pw("lift.mix", C, C + 8);
    for (int t = 0; t < cfg.iterations; ++t) {
        const std::string it = "it" + std::to_string(t) + ".";
        pw(it + "w", C, C);
        if (cfg.vanilla_fno) {
            out.push_back({it + "fno.re", {C, 2 * C}, true});
            out.push_back({it + "fno.im", {C, 2 * C}, true});
            continue;
        }
        if (!cfg.magnitude_only) pw(it + "efim", C, 2 * C);
        if (!cfg.phase_only) {
            pw(it + "ifim.mix", C, 2 * C);
            if (!cfg.no_depthwise) out.push_back({it + "ifim.dw", {C, 3, 3}, true});
            pw(it + "ifim.proj", C, C);
        }
    }
    pw("proj", B, C);
    return out;
}

/// Exact learnable parameter count; a pure function of (C, B, T) and the
/// ablation flags. For the default variant it expands to
///   9C(1 + B + 2C) + 4C            (encoders)
/// + C(C + 8) + C                   (lifting mixer)
/// + T * (3C^2 + 2*2C*C + 9C + 4C)  (per-iteration blocks, dw included)
/// + BC + B                         (projection)
inline int64_t param_count(const EdnoConfig& cfg) {
    int64_t n = 0;
    for (const auto& p : param_layout(cfg)) {
        int64_t b = 1;
        for (int64_t d : p.dims) b *= d;
        n += b;
    }
    return n;
}

/// Seeded init: weights U(-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero.
/// fan_in is the product of all dims past the first (so 9 for depthwise
/// kernels). Draws happen in layout order, in double, then round to T.
///
/// One departure from the plain uniform init, needed to train within a
/// desk-scale step budget at the fixed 1e-4 learning rate:
///   - the phase-gate weights get 2/pi added on the z-phase diagonal, which
///     passes the latent phase straight through the sigmoid's linear region
///     at start (otherwise the geometry path stays dark for thousands of
///     steps while the gate opens at ~lr per step).
template <typename T>
ParamStore<T> init_params(const EdnoConfig& cfg, uint64_t seed) {
    ParamStore<T> ps;
    std::mt19937_64 rng(seed);
    const int64_t C = cfg.channels;
    for (const auto& spec : param_layout(cfg)) {
        Block<T>& b = ps.add(spec.key, spec.dims);
        if (!spec.is_weight) continue; // biases stay zero
        int64_t fan_in = 1;
        for (size_t i = 1; i < spec.dims.size(); ++i) fan_in *= spec.dims[i];
        const double s = 1.0 / std::sqrt(double(fan_in));
        std::uniform_real_distribution<double> dist(-s, s);
        for (auto& x : b.v) x = T(dist(rng));
        if (spec.key.find(".efim.w") != std::string::npos)
            for (int64_t o = 0; o < C; ++o) b.v[size_t(o) * 2 * C + C + o] += T(2.0 / M_PI);
    }
    return ps;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

/// The fractional-offset channels concatenated during lifting: for each
/// target pixel, the (dy, dx) displacement to each of its four bilinear
/// neighbours on the source grid, in source-pixel units (8 scalars).
template <typename T>
Grid<T> lift_offsets(int src_h, int src_w, int dst_h, int dst_w) {
    Grid<T> g(dst_h, dst_w, 8);
    const auto queries = resample_queries<T>(src_h, src_w, dst_h, dst_w);
    for (size_t q = 0; q < queries.size(); ++q) {
        const auto t = bilinear_tap(queries[q].first, queries[q].second, src_h, src_w);
        const T qy = std::clamp(queries[q].first, T(0), T(src_h - 1));
        const T qx = std::clamp(queries[q].second, T(0), T(src_w - 1));
        T* p = g.v.data() + q * 8;
        p[0] = qy - T(t.y0); p[1] = qx - T(t.x0);
        p[2] = qy - T(t.y0); p[3] = qx - T(t.x1);
        p[4] = qy - T(t.y1); p[5] = qx - T(t.x0);
        p[6] = qy - T(t.y1); p[7] = qx - T(t.x1);
    }
    return g;
}

template <typename T>
class EdnoModel {
public:
    explicit EdnoModel(EdnoConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

    const EdnoConfig& config() const { return cfg_; }

    /// Pan latent spectrum, computed once per forward and re-injected into
    /// every interaction layer.
    struct PanFreq {
        ValueId re = -1, im = -1;
        ValueId mag = -1, phase = -1; // unused for vanilla_fno
    };

    /// Encode LR-MS, sample the latent onto the target grid, append the
    /// fractional offsets and mix down to C channels.
    ValueId lift_ms(Tape<T>& tape, ValueId lrms, int target_h, int target_w) const {
        const int src_h = tape.value(lrms).h, src_w = tape.value(lrms).w;
        if (src_h < 2 || src_w < 2) throw ShapeError("lift_ms: LR-MS must be at least 2x2");
        if (target_h < src_h || target_w < src_w)
            throw ShapeError("lift_ms: target smaller than source");
        ValueId e = tape.relu(tape.conv3x3(lrms, "enc.ms.c1.w", "enc.ms.c1.b"));
        e = tape.conv3x3(e, "enc.ms.c2.w", "enc.ms.c2.b");
        const auto queries = resample_queries<T>(src_h, src_w, target_h, target_w);
        ValueId sampled = tape.bilinear(e, queries, target_h, target_w);
        ValueId offs = tape.constant(lift_offsets<T>(src_h, src_w, target_h, target_w));
        return tape.conv1x1(tape.concat_c(sampled, offs), "lift.mix.w", "lift.mix.b");
    }

    /// Encode PAN (already resampled to the target grid) to C channels.
    ValueId lift_pan(Tape<T>& tape, ValueId pan) const {
        ValueId e = tape.relu(tape.conv3x3(pan, "enc.pan.c1.w", "enc.pan.c1.b"));
        return tape.conv3x3(e, "enc.pan.c2.w", "enc.pan.c2.b");
    }

    /// Resample PAN onto the target grid when its dims differ (scale jitter).
    static Grid<T> pan_to_target(const Grid<T>& pan, int target_h, int target_w) {
        if (pan.c != 1) throw ShapeError("pan must have a single band");
        return bilinear_resize(pan, target_h, target_w);
    }

    /// Explicit phase interaction: gate the concatenated phases through a
    /// 1x1 conv + sigmoid, then map (0,1) back onto (-pi, pi) symmetrically.
    ValueId efim(Tape<T>& tape, ValueId phase_pan, ValueId phase_z, int t) const {
        const std::string it = iter_key(t);
        ValueId g = tape.sigmoid(
            tape.conv1x1(tape.concat_c(phase_pan, phase_z), it + "efim.w", it + "efim.b"));
        const T pi_in = std::nextafter(T(M_PI), T(0)); // keeps the result strictly inside +-pi
        return tape.affine(g, T(2) * pi_in, -pi_in);
    }

    /// Implicit magnitude interaction: mix, normalize, and filter the
    /// concatenated magnitudes; clamped at zero so it stays a magnitude.
    ValueId ifim(Tape<T>& tape, ValueId mag_pan, ValueId mag_z, int t) const {
        const std::string it = iter_key(t);
        ValueId h = tape.conv1x1(tape.concat_c(mag_pan, mag_z), it + "ifim.mix.w",
                                 it + "ifim.mix.b");
        h = tape.relu(tape.instance_norm(h));
        if (!cfg_.no_depthwise) h = tape.relu(tape.depthwise3x3(h, it + "ifim.dw"));
        h = tape.conv1x1(h, it + "ifim.proj.w", it + "ifim.proj.b");
        return tape.relu(h);
    }

    /// One Euler feature interaction layer on latent z.
    ValueId efil(Tape<T>& tape, ValueId z, const PanFreq& pan, int t) const {
        auto [zre, zim] = tape.fft2(z);
        if (cfg_.vanilla_fno) {
            // learned complex 1x1 on the concatenated spectra
            const std::string it = iter_key(t);
            ValueId cre = tape.concat_c(pan.re, zre);
            ValueId cim = tape.concat_c(pan.im, zim);
            ValueId yre = tape.sub(tape.conv1x1(cre, it + "fno.re"),
                                   tape.conv1x1(cim, it + "fno.im"));
            ValueId yim = tape.add(tape.conv1x1(cim, it + "fno.re"),
                                   tape.conv1x1(cre, it + "fno.im"));
            return tape.ifft2_real(yre, yim);
        }
        auto [zmag, zphase] = tape.to_polar(zre, zim);
        ValueId fused_phase =
            cfg_.magnitude_only ? zphase : efim(tape, pan.phase, zphase, t);
        ValueId fused_mag;
        if (cfg_.phase_only) {
            fused_mag = zmag; // passthrough keeps the raw spectrum scale
        } else {
            // the normalization inside the magnitude path emits O(1) values;
            // sqrt(H*W) restores spectrum scale against the 1/(H*W) inverse
            // (the orthonormal-transform reading), otherwise the layer output
            // is quenched to ~1/(H*W) and the path cannot train. The extra
            // fixed factor puts the reconstructed features in the latents'
            // dynamic range, which sets the leverage of every weight upstream
            // of the projection.
            const Grid<T>& zg = tape.value(z);
            const T spectral_gain = T(kSpectralGainFactor) * std::sqrt(T(zg.h) * T(zg.w));
            fused_mag = tape.affine(ifim(tape, pan.mag, zmag, t), spectral_gain, T(0));
        }
        auto [fre, fim] = tape.from_polar(fused_mag, fused_phase);
        return tape.ifft2_real(fre, fim);
    }

    /// Full pipeline; returns the unclamped output value id.
    ValueId forward(Tape<T>& tape, const SamplePair<T>& sample) const {
        check_sample(sample);
        const auto [th, tw] = sample.target_dims();

        ValueId pan_in = tape.constant(pan_to_target(sample.pan, th, tw));
        ValueId fpan = lift_pan(tape, pan_in);
        PanFreq pf;
        std::tie(pf.re, pf.im) = tape.fft2(fpan);
        if (!cfg_.vanilla_fno) std::tie(pf.mag, pf.phase) = tape.to_polar(pf.re, pf.im);

        ValueId z = lift_ms(tape, tape.constant(sample.lrms), th, tw);
        for (int t = 0; t + 1 < cfg_.iterations; ++t) {
            const std::string it = iter_key(t);
            ValueId e = efil(tape, z, pf, t);
            z = tape.relu(tape.add(tape.conv1x1(z, it + "w.w", it + "w.b"), e));
        }
        // final layer: the fused spectrum is inverted directly, no skip or
        // activation (it<T-1>.w stays allocated but out of the graph)
        z = efil(tape, z, pf, cfg_.iterations - 1);

        ValueId projected = tape.conv1x1(z, "proj.w", "proj.b");
        ValueId residual = tape.constant(bilinear_resize(sample.lrms, th, tw));
        return tape.add(projected, residual);
    }

    /// Convenience inference path; clamps to [0,1] for evaluation.
    Grid<T> predict(const SamplePair<T>& sample, const ParamStore<T>& params,
                    bool clamp01 = true) const {
        Tape<T> tape(&params);
        Grid<T> out = tape.value(forward(tape, sample));
        if (clamp01)
            for (auto& x : out.v) x = std::clamp(x, T(0), T(1));
        return out;
    }

private:
    EdnoConfig cfg_;

    static std::string iter_key(int t) { return "it" + std::to_string(t) + "."; }

    void check_sample(const SamplePair<T>& s) const {
        if (s.pan.c != 1) throw ShapeError("SamplePair: pan must be single-band");
        if (s.lrms.c != cfg_.bands)
            throw ShapeError("SamplePair: lrms has " + std::to_string(s.lrms.c) +
                             " bands, config expects " + std::to_string(cfg_.bands));
        if (s.gt && s.gt->c != cfg_.bands)
            throw ShapeError("SamplePair: gt band count mismatch");
    }
};

} // namespace edno

#endif
