#pragma once

#include <cmath>
#include <vector>

#include "edtalk/core/errors.hpp"
#include "edtalk/core/tensor.hpp"

namespace edtalk::evalkit {

/// 10*log10(1/MSE) for [0,1] images, capped at 99 dB for MSE < 1e-10.
template <typename T>
double psnr(const Tensor<T>& pred, const Tensor<T>& target) {
    if (!pred.same_shape(target)) throw ShapeError("psnr: shape mismatch");
    double mse = 0.0;
    for (int64_t i = 0; i < pred.size(); ++i) {
        double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(pred.size());
    if (mse < 1e-10) return 99.0;
    return 10.0 * std::log10(1.0 / mse);
}

namespace detail {

inline const std::vector<double>& gaussian11() {
    static const std::vector<double> k = [] {
        std::vector<double> v(11);
        double sum = 0.0;
        for (int i = 0; i < 11; ++i) {
            double x = i - 5.0;
            v[static_cast<size_t>(i)] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
            sum += v[static_cast<size_t>(i)];
        }
        for (auto& x : v) x /= sum;
        return v;
    }();
    return k;
}

// separable 11-tap gaussian, valid region only: out is (H-10) x (W-10)
inline std::vector<double> filter_valid(const std::vector<double>& img, int h, int w) {
    const auto& k = gaussian11();
    int wv = w - 10, hv = h - 10;
    std::vector<double> tmp(static_cast<size_t>(h) * wv);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < wv; ++x) {
            double s = 0.0;
            for (int i = 0; i < 11; ++i) s += k[static_cast<size_t>(i)] * img[static_cast<size_t>(y) * w + x + i];
            tmp[static_cast<size_t>(y) * wv + x] = s;
        }
    std::vector<double> out(static_cast<size_t>(hv) * wv);
    for (int y = 0; y < hv; ++y)
        for (int x = 0; x < wv; ++x) {
            double s = 0.0;
            for (int i = 0; i < 11; ++i) s += k[static_cast<size_t>(i)] * tmp[static_cast<size_t>(y + i) * wv + x];
            out[static_cast<size_t>(y) * wv + x] = s;
        }
    return out;
}

}  // namespace detail

/// Mean SSIM over channels, 11x11 Gaussian window (sigma 1.5), valid region,
/// K1=0.01 K2=0.03, dynamic range 1.
template <typename T>
double ssim(const Tensor<T>& pred, const Tensor<T>& target) {
    if (!pred.same_shape(target)) throw ShapeError("ssim: shape mismatch");
    if (pred.ndim() != 3) throw ShapeError("ssim: need CHW images");
    int C = pred.dim(0), H = pred.dim(1), W = pred.dim(2);
    if (H < 11 || W < 11) throw ShapeError("ssim: image smaller than the window");
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    for (int c = 0; c < C; ++c) {
        size_t hw = static_cast<size_t>(H) * W;
        std::vector<double> x(hw), y(hw), xx(hw), yy(hw), xy(hw);
        for (size_t i = 0; i < hw; ++i) {
            double a = pred[static_cast<int64_t>(c * hw + i)];
            double b = target[static_cast<int64_t>(c * hw + i)];
            x[i] = a; y[i] = b; xx[i] = a * a; yy[i] = b * b; xy[i] = a * b;
        }
        auto mu1 = detail::filter_valid(x, H, W);
        auto mu2 = detail::filter_valid(y, H, W);
        auto s11 = detail::filter_valid(xx, H, W);
        auto s22 = detail::filter_valid(yy, H, W);
        auto s12 = detail::filter_valid(xy, H, W);
        double acc = 0.0;
        for (size_t i = 0; i < mu1.size(); ++i) {
            double m1 = mu1[i], m2 = mu2[i];
            double v1 = s11[i] - m1 * m1, v2 = s22[i] - m2 * m2, cv = s12[i] - m1 * m2;
            acc += ((2 * m1 * m2 + c1) * (2 * cv + c2)) /
                   ((m1 * m1 + m2 * m2 + c1) * (v1 + v2 + c2));
        }
        total += acc / static_cast<double>(mu1.size());
    }
    return total / C;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw ShapeError("pearson: length mismatch");
    double ma = 0, mb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(a.size());
    mb /= static_cast<double>(a.size());
    double sab = 0, saa = 0, sbb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    double den = std::sqrt(saa * sbb);
    return den > 0 ? sab / den : 0.0;
}

}  // namespace edtalk::evalkit
