#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "edtalk/core/errors.hpp"
#include "edtalk/core/rng.hpp"

namespace edtalk::toyworld {

/// Ground-truth control factors for one rendered frame. identity_params are
/// fixed per subject; the four motion factors move frame to frame.
struct FactorVector {
    // identity layout:
    //  0 head_rx, 1 head_ry, 2..4 skin rgb, 5 eye_dx, 6 eye_y, 7 eye_r,
    //  8 mouth_y, 9 mouth_w, 10 brow_dy, 11 brow_len
    std::vector<double> identity_params;
    double pose = 0.0;        // [-1, 1] horizontal offset + rotation proxy
    double mouth = 0.5;       // [0, 1] openness
    double eye = 0.8;         // [0, 1] openness
    double expression = 0.0;  // [-1, 1] mouth-corner curvature + brow angle

    static constexpr int kIdentityDim = 12;

    void validate() const {
        if (static_cast<int>(identity_params.size()) != kIdentityDim)
            throw RangeError("factors: identity_params must have 12 entries");
        if (pose < -1.0 || pose > 1.0) throw RangeError("factors: pose out of [-1,1]");
        if (mouth < 0.0 || mouth > 1.0) throw RangeError("factors: mouth out of [0,1]");
        if (eye < 0.0 || eye > 1.0) throw RangeError("factors: eye out of [0,1]");
        if (expression < -1.0 || expression > 1.0)
            throw RangeError("factors: expression out of [-1,1]");
    }
};

/// Factor value ranges (for probe/leakage normalization).
inline double factor_range(int factor) {
    // 0 pose, 1 mouth, 2 eye, 3 expression
    return (factor == 0 || factor == 3) ? 2.0 : 1.0;
}

inline std::vector<double> sample_identity(Rng& rng) {
    std::vector<double> id(FactorVector::kIdentityDim);
    id[0] = rng.uniform(0.26, 0.33);    // head_rx
    id[1] = rng.uniform(0.30, 0.38);    // head_ry
    id[2] = rng.uniform(0.72, 0.95);    // skin r
    id[3] = rng.uniform(0.58, 0.82);    // skin g
    id[4] = rng.uniform(0.48, 0.75);    // skin b
    id[5] = rng.uniform(0.10, 0.14);    // eye_dx
    id[6] = rng.uniform(-0.14, -0.10);  // eye_y (above center, y grows down)
    id[7] = rng.uniform(0.035, 0.045);  // eye_r
    id[8] = rng.uniform(0.13, 0.17);    // mouth_y
    id[9] = rng.uniform(0.10, 0.14);    // mouth_w
    id[10] = rng.uniform(0.085, 0.105); // brow_dy above eye center
    id[11] = rng.uniform(0.060, 0.090); // brow half-span * 2
    return id;
}

/// Shapes of the per-frame factor tracks produced by sample_trajectory.
struct DynamicsConfig {
    double frame_rate = 25.0;
    double pose_amplitude = 0.8;
    double mouth_rate_hz = 3.0;          // syllable-scale oscillation
    double eye_base = 0.78;
    double blink_period_s = 2.8;
    double expression_amplitude = 0.9;   // near zero for neutral subjects
    double expression_rate_hz = 0.05;    // much slower than mouth by construction
};

/// Smooth, deterministic factor tracks for one subject.
inline std::vector<FactorVector> sample_trajectory(uint64_t subject_seed, int length,
                                                   const DynamicsConfig& cfg = {}) {
    if (length < 1) throw RangeError("sample_trajectory: length must be >= 1");
    Rng idrng = Rng::derive(subject_seed, "identity");
    std::vector<double> identity = sample_identity(idrng);

    Rng prng = Rng::derive(subject_seed, "pose");
    double pf[3], pp[3], pa[3] = {0.5, 0.3, 0.2};
    for (int k = 0; k < 3; ++k) {
        pf[k] = prng.uniform(0.08, 0.5);
        pp[k] = prng.uniform(0.0, 6.28318530717958647692);
    }
    Rng mrng = Rng::derive(subject_seed, "mouth");
    double m_f = mrng.uniform(0.8, 1.2) * cfg.mouth_rate_hz;
    double m_p = mrng.uniform(0.0, 6.28318530717958647692);
    double m_envf = mrng.uniform(0.18, 0.32);
    double m_envp = mrng.uniform(0.0, 6.28318530717958647692);
    Rng erng = Rng::derive(subject_seed, "eye");
    double e_f1 = erng.uniform(0.25, 0.6), e_p1 = erng.uniform(0.0, 6.28318530717958647692);
    double e_f2 = erng.uniform(0.5, 0.9), e_p2 = erng.uniform(0.0, 6.28318530717958647692);
    double blink0 = erng.uniform(0.3, cfg.blink_period_s);
    double blink_jit = erng.uniform(0.85, 1.15);
    Rng xrng = Rng::derive(subject_seed, "expression");
    double x_f = xrng.uniform(0.7, 1.3) * cfg.expression_rate_hz;
    double x_p1 = xrng.uniform(0.0, 6.28318530717958647692);
    double x_p2 = xrng.uniform(0.0, 6.28318530717958647692);

    auto clamp = [](double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); };
    const double tau = 6.28318530717958647692;

    std::vector<FactorVector> out(static_cast<size_t>(length));
    for (int i = 0; i < length; ++i) {
        double t = static_cast<double>(i) / cfg.frame_rate;
        FactorVector f;
        f.identity_params = identity;

        double pose = 0.0;
        for (int k = 0; k < 3; ++k) pose += pa[k] * std::sin(tau * pf[k] * t + pp[k]);
        f.pose = clamp(cfg.pose_amplitude * pose, -1.0, 1.0);

        double env = 0.45 + 0.55 * std::sin(tau * m_envf * t + m_envp);
        double syll = std::abs(std::sin(tau * m_f * t + m_p));
        f.mouth = clamp(env * syll, 0.0, 1.0);

        double eye = cfg.eye_base + 0.10 * std::sin(tau * e_f1 * t + e_p1) +
                     0.07 * std::sin(tau * e_f2 * t + e_p2);
        double period = cfg.blink_period_s * blink_jit;
        double since = std::fmod(t + blink0, period);
        double dt = std::min(since, period - since);
        eye -= 0.85 * std::exp(-dt * dt / (2.0 * 0.055 * 0.055));
        f.eye = clamp(eye, 0.0, 1.0);

        double expr = 0.7 * std::sin(tau * x_f * t + x_p1) +
                      0.3 * std::sin(tau * 1.7 * x_f * t + x_p2);
        f.expression = clamp(cfg.expression_amplitude * expr, -1.0, 1.0);

        out[static_cast<size_t>(i)] = std::move(f);
    }
    return out;
}

}  // namespace edtalk::toyworld
