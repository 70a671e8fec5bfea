#pragma once

#include <algorithm>
#include <cmath>

#include "edtalk/core/errors.hpp"
#include "edtalk/core/tensor.hpp"
#include "edtalk/toyworld/factors.hpp"

namespace edtalk::toyworld {

/// Labeled rendered frame.
struct ToyFrame {
    Tensor<float> image;  // [3,H,W] in [0,1]
    FactorVector factors;
    int subject_id = 0;
    int frame_index = 0;
};

enum class Region { face, eyes, mouth };

inline const char* region_name(Region r) {
    switch (r) {
        case Region::face: return "face";
        case Region::eyes: return "eyes";
        default: return "mouth";
    }
}

/// Analytic binary mask for one region, derived from factor geometry.
struct RegionMask {
    Tensor<float> mask;  // [H,W] in {0,1}
    Region region = Region::face;
};

// Geometry constants, canvas units (image spans [0,1] x [0,1], y down).
namespace geom {
inline constexpr double kHeadCx = 0.5;
inline constexpr double kHeadCy = 0.52;
inline constexpr double kPoseShift = 0.09;   // canvas units per pose unit
inline constexpr double kPoseRot = 0.25;     // radians per pose unit
inline constexpr double kMouthLip = 0.010;
inline constexpr double kMouthOpenMax = 0.045;
inline constexpr double kMouthCurve = 0.05;
inline constexpr double kScleraRx = 1.4;     // * eye_r
inline constexpr double kScleraRyMin = 0.18;
inline constexpr double kPupil = 0.62;       // * eye_r
inline constexpr double kBrowHalfThick = 0.0055;
inline constexpr double kBrowAngle = 0.30;   // radians per expression unit
inline constexpr double kFaceDilate = 0.032; // ~2 px at 64
inline constexpr double kPartDilate = 0.024; // ~1.5 px at 64
inline constexpr double kAaWidth = 0.75;     // px, soft edge half-width

struct Pose {
    double cx, cy, cos_t, sin_t;
    explicit Pose(double pose) {
        cx = kHeadCx + pose * kPoseShift;
        cy = kHeadCy;
        double th = pose * kPoseRot;
        cos_t = std::cos(th);
        sin_t = std::sin(th);
    }
    // canvas -> head-local
    void to_local(double px, double py, double& lx, double& ly) const {
        double dx = px - cx, dy = py - cy;
        lx = cos_t * dx + sin_t * dy;
        ly = -sin_t * dx + cos_t * dy;
    }
    // head-local -> canvas
    void to_canvas(double lx, double ly, double& px, double& py) const {
        px = cos_t * lx - sin_t * ly + cx;
        py = sin_t * lx + cos_t * ly + cy;
    }
};

inline double ellipse_sd(double x, double y, double rx, double ry) {
    double n = std::sqrt((x / rx) * (x / rx) + (y / ry) * (y / ry));
    return (n - 1.0) * std::min(rx, ry);
}

inline double segment_sd(double x, double y, double ax, double ay, double bx, double by) {
    double vx = bx - ax, vy = by - ay;
    double wx = x - ax, wy = y - ay;
    double t = (vx * wx + vy * wy) / (vx * vx + vy * vy);
    t = std::clamp(t, 0.0, 1.0);
    double dx = wx - t * vx, dy = wy - t * vy;
    return std::sqrt(dx * dx + dy * dy);
}

/// Signed distance (canvas units, negative inside) of the mouth lens at a
/// given openness cap. Coordinates are head-local.
inline double mouth_sd(double lx, double ly, const FactorVector& f, double open_cap,
                       double dilate) {
    const auto& id = f.identity_params;
    double mx = lx, my = ly - id[8];
    double w = id[9];
    double u = mx / w;
    double uc = std::clamp(u, -1.0, 1.0);
    double yc = -f.expression * kMouthCurve * uc * uc;
    double g = kMouthLip + open_cap * (1.0 - uc * uc);
    double dy = std::abs(my - yc) - g - dilate;
    double du = (std::abs(u) - 1.0) * w - dilate;
    return std::max(dy, du);
}

inline double eyes_sd(double lx, double ly, const FactorVector& f, double ry_scale,
                      double dilate) {
    const auto& id = f.identity_params;
    double rx = id[7] * kScleraRx + dilate;
    double ry = id[7] * ry_scale + dilate;
    double dl = ellipse_sd(lx + id[5], ly - id[6], rx, ry);
    double dr = ellipse_sd(lx - id[5], ly - id[6], rx, ry);
    return std::min(dl, dr);
}

inline double face_sd(double lx, double ly, const FactorVector& f, double dilate) {
    const auto& id = f.identity_params;
    return ellipse_sd(lx, ly, id[0] + dilate, id[1] + dilate);
}

inline double region_sd(double lx, double ly, const FactorVector& f, Region r) {
    switch (r) {
        case Region::face: return face_sd(lx, ly, f, kFaceDilate);
        case Region::eyes: return eyes_sd(lx, ly, f, 1.0, kPartDilate);
        default: return mouth_sd(lx, ly, f, kMouthOpenMax, kPartDilate);
    }
}

}  // namespace geom

/// Declared centroid displacement (in pixels) per unit of pose.
inline double pixels_per_pose_unit(int size) { return geom::kPoseShift * size; }

/// Deterministic cartoon-face render. Pure function of (factors, size).
inline ToyFrame render_frame(const FactorVector& factors, int size = 64) {
    factors.validate();
    const auto& id = factors.identity_params;
    geom::Pose pose(factors.pose);
    const double aa = geom::kAaWidth / size;

    auto cov = [aa](double sd) {
        // 1 inside, 0 outside, smooth hermite ramp across the edge
        double t = std::clamp((sd + aa) / (2.0 * aa), 0.0, 1.0);
        double s = t * t * (3.0 - 2.0 * t);
        return 1.0 - s;
    };

    const double bg[3] = {0.91, 0.93, 0.96};
    const double skin[3] = {id[2], id[3], id[4]};
    const double line[3] = {id[2] * 0.45, id[3] * 0.45, id[4] * 0.45};
    const double mouthc[3] = {0.46, 0.12, 0.14};
    const double sclera[3] = {0.97, 0.97, 0.98};
    const double pupil[3] = {0.08, 0.07, 0.10};
    const double brow[3] = {0.16, 0.11, 0.08};

    ToyFrame frame;
    frame.factors = factors;
    frame.image = Tensor<float>({3, size, size});

    for (int py = 0; py < size; ++py) {
        for (int px = 0; px < size; ++px) {
            double cx = (px + 0.5) / size, cy = (py + 0.5) / size;
            double lx, ly;
            pose.to_local(cx, cy, lx, ly);

            double c[3] = {bg[0], bg[1], bg[2]};
            auto blend = [&](double a, const double col[3]) {
                if (a <= 0.0) return;
                for (int k = 0; k < 3; ++k) c[k] = c[k] + a * (col[k] - c[k]);
            };

            double head_sd = geom::face_sd(lx, ly, factors, 0.0);
            blend(cov(head_sd), skin);
            blend(cov(std::abs(head_sd) - 0.9 / size), line);

            blend(cov(geom::mouth_sd(lx, ly, factors,
                                     geom::kMouthOpenMax * factors.mouth, 0.0)),
                  mouthc);

            double ry_scale = geom::kScleraRyMin + (1.0 - geom::kScleraRyMin) * factors.eye;
            double sc = cov(geom::eyes_sd(lx, ly, factors, ry_scale, 0.0));
            blend(sc, sclera);
            double pr = id[7] * geom::kPupil * (0.2 + 0.8 * factors.eye);
            double pl = geom::ellipse_sd(lx + id[5], ly - id[6], pr, pr);
            double prr = geom::ellipse_sd(lx - id[5], ly - id[6], pr, pr);
            blend(cov(std::min(pl, prr)) * sc, pupil);

            double bx = id[5], by = id[6] - id[10], half = id[11] * 0.5;
            double angL = factors.expression * geom::kBrowAngle;
            double angR = -angL;
            double dL = geom::segment_sd(lx, ly, -bx - half * std::cos(angL),
                                         by - half * std::sin(angL),
                                         -bx + half * std::cos(angL),
                                         by + half * std::sin(angL)) -
                        geom::kBrowHalfThick;
            double dR = geom::segment_sd(lx, ly, bx - half * std::cos(angR),
                                         by - half * std::sin(angR),
                                         bx + half * std::cos(angR),
                                         by + half * std::sin(angR)) -
                        geom::kBrowHalfThick;
            blend(cov(std::min(dL, dR)), brow);

            for (int k = 0; k < 3; ++k)
                frame.image.at(k, py, px) = static_cast<float>(std::clamp(c[k], 0.0, 1.0));
        }
    }
    return frame;
}

/// Binary mask of the region that a factor may touch, at max articulation.
inline RegionMask region_mask(const FactorVector& factors, int size, Region region) {
    factors.validate();
    geom::Pose pose(factors.pose);
    RegionMask out;
    out.region = region;
    out.mask = Tensor<float>({size, size});
    for (int py = 0; py < size; ++py)
        for (int px = 0; px < size; ++px) {
            double lx, ly;
            pose.to_local((px + 0.5) / size, (py + 0.5) / size, lx, ly);
            out.mask.at(py, px) = geom::region_sd(lx, ly, factors, region) < 0.0 ? 1.f : 0.f;
        }
    return out;
}

/// Soft paste weight for swap_region: 1 deep inside the region, ramping to 0
/// at the region boundary over `feather_px` (the seam feather).
inline Tensor<float> region_alpha(const FactorVector& factors, int size, Region region,
                                  double feather_px) {
    geom::Pose pose(factors.pose);
    Tensor<float> alpha({size, size});
    double fw = std::max(feather_px, 1e-6) / size;
    for (int py = 0; py < size; ++py)
        for (int px = 0; px < size; ++px) {
            double lx, ly;
            pose.to_local((px + 0.5) / size, (py + 0.5) / size, lx, ly);
            double sd = geom::region_sd(lx, ly, factors, region);
            alpha.at(py, px) = static_cast<float>(std::clamp(-sd / fw, 0.0, 1.0));
        }
    return alpha;
}

inline float sample_bilinear(const Tensor<float>& img, int c, double x, double y) {
    int w = img.dim(2), h = img.dim(1);
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
    int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    double fx = x - x0, fy = y - y0;
    double v0 = img.at(c, y0, x0) + fx * (img.at(c, y0, x1) - img.at(c, y0, x0));
    double v1 = img.at(c, y1, x0) + fx * (img.at(c, y1, x1) - img.at(c, y1, x0));
    return static_cast<float>(v0 + fy * (v1 - v0));
}

/// Core compositor: paste head-frame-aligned content of `a` onto `b` under a
/// given alpha map. Exposed for tests that inject custom alphas.
inline Tensor<float> swap_with_alpha(const ToyFrame& a, const ToyFrame& b,
                                     const Tensor<float>& alpha) {
    if (!a.image.same_shape(b.image)) throw ShapeError("swap_region: image size mismatch");
    int size = b.image.dim(1);
    geom::Pose pose_a(a.factors.pose), pose_b(b.factors.pose);
    Tensor<float> out = b.image;
    for (int py = 0; py < size; ++py)
        for (int px = 0; px < size; ++px) {
            float al = alpha.at(py, px);
            if (al <= 0.f) continue;
            double lx, ly, ax, ay;
            pose_b.to_local((px + 0.5) / size, (py + 0.5) / size, lx, ly);
            pose_a.to_canvas(lx, ly, ax, ay);
            double sx = ax * size - 0.5, sy = ay * size - 0.5;
            for (int c = 0; c < 3; ++c) {
                float src = sample_bilinear(a.image, c, sx, sy);
                float dst = out.at(c, py, px);
                out.at(c, py, px) = dst + al * (src - dst);
            }
        }
    return out;
}

/// Paste `region` content of frame `a` onto frame `b`. The mask comes from
/// the destination frame's geometry; source pixels are resampled through the
/// head-frame mapping so the pasted part lands at the destination's pose.
inline Tensor<float> swap_region(const ToyFrame& a, const ToyFrame& b, Region region,
                                 double feather_px = 2.0) {
    if (!a.image.same_shape(b.image)) throw ShapeError("swap_region: image size mismatch");
    Tensor<float> alpha = region_alpha(b.factors, b.image.dim(1), region, feather_px);
    return swap_with_alpha(a, b, alpha);
}

}  // namespace edtalk::toyworld
