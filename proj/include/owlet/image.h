// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace owlet {

// H×W×3 float image, row-major, values in [0,1].
struct ImageTensor {
    int h = 0;
    int w = 0;
    std::vector<float> rgb;

    bool valid() const { return h > 0 && w > 0 && rgb.size() == static_cast<size_t>(h) * w * 3; }

    float& at(int y, int x, int c) { return rgb[(static_cast<size_t>(y) * w + x) * 3 + c]; }
    float at(int y, int x, int c) const { return rgb[(static_cast<size_t>(y) * w + x) * 3 + c]; }
};

// Reads a P6 PPM (8-bit) or an RFG raw float grid, dispatched on magic.
// RFG layout: "RFG1", int32 h, int32 w, then h*w*3 little-endian floats.
ImageTensor read_image(const std::string& path);

void write_ppm(const std::string& path, const ImageTensor& img);
void write_rfg(const std::string& path, const ImageTensor& img);

// Deterministic bilinear resize.
ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w);

}  // namespace owlet
