#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "flarekit/errors.hpp"

namespace flarekit {

enum class Cfa { RGGB, BGGR, GRBG, GBRG };

std::string cfa_name(Cfa cfa);
Cfa cfa_from_name(const std::string& name);

// Channel (0=R,1=G,2=B) sampled at mosaic site (x,y).
inline int cfa_channel_at(Cfa cfa, int x, int y) {
    static constexpr int kPattern[4][4] = {
        {0, 1, 1, 2}, // RGGB
        {2, 1, 1, 0}, // BGGR
        {1, 0, 2, 1}, // GRBG
        {1, 2, 0, 1}, // GBRG
    };
    return kPattern[int(cfa)][(y & 1) * 2 + (x & 1)];
}

// Index into the 4-entry per-pattern-cell tables (black level).
inline int cfa_cell_index(int x, int y) { return (y & 1) * 2 + (x & 1); }

// Bayer-mosaic sensor frame plus the metadata needed to develop it.
struct RawImage {
    int width = 0;
    int height = 0;
    Cfa cfa = Cfa::RGGB;
    int bit_depth = 12;
    std::array<int, 4> black_level{64, 64, 64, 64}; // per pattern cell
    int white_level = 4095;
    std::array<float, 3> wb_gains{1.f, 1.f, 1.f};
    std::array<float, 9> color_matrix{1, 0, 0, 0, 1, 0, 0, 0, 1}; // row-major camera->sRGB
    std::vector<uint16_t> pixels; // row-major counts

    uint16_t& at(int x, int y) { return pixels[size_t(y) * width + x]; }
    uint16_t at(int x, int y) const { return pixels[size_t(y) * width + x]; }

    void validate() const; // throws InvalidMetadataError
};

// Float mosaic in [0,1]-ish range, still CFA-laid-out.
struct RawMosaic {
    int width = 0;
    int height = 0;
    Cfa cfa = Cfa::RGGB;
    std::vector<float> samples;

    float& at(int x, int y) { return samples[size_t(y) * width + x]; }
    float at(int x, int y) const { return samples[size_t(y) * width + x]; }
};

// Linear-light RGB. Nominal [0,1]; headroom above 1 survives until tone_map.
struct LinearImage {
    int width = 0;
    int height = 0;
    std::vector<float> samples; // w*h*3, interleaved

    LinearImage() = default;
    LinearImage(int w, int h, float fill = 0.f)
        : width(w), height(h), samples(size_t(w) * h * 3, fill) {}

    float& at(int x, int y, int c) { return samples[(size_t(y) * width + x) * 3 + c]; }
    float at(int x, int y, int c) const { return samples[(size_t(y) * width + x) * 3 + c]; }
};

// 8-bit sRGB-encoded RGB.
struct EncodedImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> samples; // w*h*3

    EncodedImage() = default;
    EncodedImage(int w, int h, uint8_t fill = 0)
        : width(w), height(h), samples(size_t(w) * h * 3, fill) {}

    uint8_t& at(int x, int y, int c) { return samples[(size_t(y) * width + x) * 3 + c]; }
    uint8_t at(int x, int y, int c) const { return samples[(size_t(y) * width + x) * 3 + c]; }

    bool same_size(const EncodedImage& o) const {
        return width == o.width && height == o.height;
    }
};

struct Mask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> values; // 0 or 1

    Mask() = default;
    Mask(int w, int h, uint8_t fill = 0)
        : width(w), height(h), values(size_t(w) * h, fill) {}

    uint8_t& at(int x, int y) { return values[size_t(y) * width + x]; }
    uint8_t at(int x, int y) const { return values[size_t(y) * width + x]; }

    size_t count() const;
};

inline float luma601(float r, float g, float b) {
    return 0.299f * r + 0.587f * g + 0.114f * b;
}

uint64_t digest(const RawImage& img);
uint64_t digest(const RawMosaic& img);
uint64_t digest(const LinearImage& img);
uint64_t digest(const EncodedImage& img);

} // namespace flarekit
