#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "edtalk/core/image_png.hpp"

namespace edtalk::evalkit {

/// Tile CHW images into one grid PNG (the artifact's answer to qualitative
/// figure grids).
template <typename T>
void write_contact_sheet(const std::string& path, const std::vector<Tensor<T>>& images,
                         int cols, int pad = 2) {
    if (images.empty()) throw ShapeError("contact sheet: no images");
    int h = images[0].dim(1), w = images[0].dim(2);
    for (auto& img : images)
        if (img.ndim() != 3 || img.dim(0) != 3 || img.dim(1) != h || img.dim(2) != w)
            throw ShapeError("contact sheet: images must share [3,H,W]");
    int rows = (static_cast<int>(images.size()) + cols - 1) / cols;
    int H = rows * h + (rows + 1) * pad;
    int W = cols * w + (cols + 1) * pad;
    Tensor<float> sheet = Tensor<float>::full({3, H, W}, 0.15f);
    for (size_t i = 0; i < images.size(); ++i) {
        int r = static_cast<int>(i) / cols, c = static_cast<int>(i) % cols;
        int y0 = pad + r * (h + pad), x0 = pad + c * (w + pad);
        for (int ch = 0; ch < 3; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    sheet.at(ch, y0 + y, x0 + x) =
                        static_cast<float>(images[i].at(ch, y, x));
    }
    write_png_chw(path, sheet);
}

inline void write_json_report(const std::string& path, const nlohmann::json& j) {
    std::ofstream f(path);
    if (!f) throw IoError("report: cannot open " + path);
    f << j.dump(2) << "\n";
}

}  // namespace edtalk::evalkit
