// SPDX-License-Identifier: Apache-2.0

#include "owlet/image.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "owlet/errors.h"

namespace owlet {

namespace {

// Skips PPM whitespace and '#' comments, then reads one unsigned integer.
int read_ppm_int(std::istream& in, const std::string& path) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c)) throw format_error("ppm: malformed header in " + path);
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = in.get();
    }
    return v;
}

ImageTensor read_ppm(std::ifstream& in, const std::string& path) {
    const int w = read_ppm_int(in, path);
    const int h = read_ppm_int(in, path);
    const int maxval = read_ppm_int(in, path);
    if (w <= 0 || h <= 0 || maxval != 255)
        throw format_error("ppm: unsupported dimensions or maxval in " + path);
    std::vector<std::uint8_t> raw(static_cast<size_t>(h) * w * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size())
        throw format_error("ppm: truncated pixel data in " + path);
    ImageTensor img{h, w, std::vector<float>(raw.size())};
    for (size_t i = 0; i < raw.size(); ++i) img.rgb[i] = static_cast<float>(raw[i]) / 255.0f;
    return img;
}

ImageTensor read_rfg(std::ifstream& in, const std::string& path) {
    std::int32_t h = 0, w = 0;
    in.read(reinterpret_cast<char*>(&h), 4);
    in.read(reinterpret_cast<char*>(&w), 4);
    if (!in || h <= 0 || w <= 0) throw format_error("rfg: malformed header in " + path);
    ImageTensor img{h, w, std::vector<float>(static_cast<size_t>(h) * w * 3)};
    in.read(reinterpret_cast<char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size() * sizeof(float)));
    if (static_cast<size_t>(in.gcount()) != img.rgb.size() * sizeof(float))
        throw format_error("rfg: truncated pixel data in " + path);
    for (float& v : img.rgb) {
        if (!std::isfinite(v) || v < -1e-6f || v > 1.0f + 1e-6f)
            throw format_error("rfg: pixel value outside [0,1] in " + path);
        v = std::clamp(v, 0.0f, 1.0f);
    }
    return img;
}

}  // namespace

ImageTensor read_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open image " + path);
    char magic[4] = {};
    in.read(magic, 2);
    if (in.gcount() == 2 && magic[0] == 'P' && magic[1] == '6') return read_ppm(in, path);
    in.read(magic + 2, 2);
    if (in.gcount() == 2 && std::memcmp(magic, "RFG1", 4) == 0) return read_rfg(in, path);
    throw format_error("unrecognized image format in " + path + " (expected P6 PPM or RFG1)");
}

void write_ppm(const std::string& path, const ImageTensor& img) {
    if (!img.valid()) throw contract_error("write_ppm: invalid image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write image " + path);
    out << "P6\n" << img.w << " " << img.h << "\n255\n";
    std::vector<std::uint8_t> raw(img.rgb.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        const float v = std::clamp(img.rgb[i], 0.0f, 1.0f);
        raw[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw io_error("short write to " + path);
}

void write_rfg(const std::string& path, const ImageTensor& img) {
    if (!img.valid()) throw contract_error("write_rfg: invalid image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write image " + path);
    out.write("RFG1", 4);
    const std::int32_t h = img.h, w = img.w;
    out.write(reinterpret_cast<const char*>(&h), 4);
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(img.rgb.data()),
              static_cast<std::streamsize>(img.rgb.size() * sizeof(float)));
    if (!out) throw io_error("short write to " + path);
}

ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w) {
    if (!img.valid()) throw contract_error("resize_bilinear: invalid image");
    if (out_h <= 0 || out_w <= 0) throw contract_error("resize_bilinear: nonpositive output size");
    if (out_h == img.h && out_w == img.w) return img;
    ImageTensor out{out_h, out_w, std::vector<float>(static_cast<size_t>(out_h) * out_w * 3)};
    const float sy = static_cast<float>(img.h) / static_cast<float>(out_h);
    const float sx = static_cast<float>(img.w) / static_cast<float>(out_w);
    for (int y = 0; y < out_h; ++y) {
        const float fy = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
        const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, img.h - 1);
        const int y1 = std::min(y0 + 1, img.h - 1);
        const float wy = std::clamp(fy - static_cast<float>(y0), 0.0f, 1.0f);
        for (int x = 0; x < out_w; ++x) {
            const float fx = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
            const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, img.w - 1);
            const int x1 = std::min(x0 + 1, img.w - 1);
            const float wx = std::clamp(fx - static_cast<float>(x0), 0.0f, 1.0f);
            for (int c = 0; c < 3; ++c) {
                const float top = img.at(y0, x0, c) * (1 - wx) + img.at(y0, x1, c) * wx;
                const float bot = img.at(y1, x0, c) * (1 - wx) + img.at(y1, x1, c) * wx;
                out.at(y, x, c) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return out;
}

}  // namespace owlet
