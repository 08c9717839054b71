#include "flarekit/image.hpp"

#include <cmath>

#include "flarekit/util.hpp"

namespace flarekit {

std::string cfa_name(Cfa cfa) {
    switch (cfa) {
        case Cfa::RGGB: return "RGGB";
        case Cfa::BGGR: return "BGGR";
        case Cfa::GRBG: return "GRBG";
        case Cfa::GBRG: return "GBRG";
    }
    return "RGGB";
}

Cfa cfa_from_name(const std::string& name) {
    if (name == "RGGB") return Cfa::RGGB;
    if (name == "BGGR") return Cfa::BGGR;
    if (name == "GRBG") return Cfa::GRBG;
    if (name == "GBRG") return Cfa::GBRG;
    throw ParseError("unknown CFA pattern: " + name);
}

void RawImage::validate() const {
    if (width <= 0 || height <= 0) throw InvalidMetadataError("raw dimensions must be positive");
    if (width % 2 != 0 || height % 2 != 0)
        throw InvalidMetadataError("raw dimensions must be even (whole CFA tiles)");
    if (bit_depth < 10 || bit_depth > 16)
        throw InvalidMetadataError("bit_depth out of range [10,16]");
    if (white_level <= 0 || white_level > (1 << bit_depth) - 1)
        throw InvalidMetadataError("white_level out of range for bit depth");
    for (int bl : black_level) {
        if (bl < 0 || bl >= white_level)
            throw InvalidMetadataError("black_level must lie in [0, white_level)");
    }
    for (float g : wb_gains) {
        if (!(g > 0.f) || !std::isfinite(g))
            throw InvalidMetadataError("wb_gains must be finite and positive");
    }
    for (float m : color_matrix) {
        if (!std::isfinite(m)) throw InvalidMetadataError("color_matrix must be finite");
    }
    if (pixels.size() != size_t(width) * height)
        throw InvalidMetadataError("pixel buffer size does not match dimensions");
    for (uint16_t p : pixels) {
        if (p > white_level) throw InvalidMetadataError("pixel count above white_level");
    }
}

size_t Mask::count() const {
    size_t n = 0;
    for (uint8_t v : values) n += (v != 0);
    return n;
}

uint64_t digest(const RawImage& img) {
    Fnv64 h;
    h.update(&img.width, sizeof img.width);
    h.update(&img.height, sizeof img.height);
    h.update(img.pixels.data(), img.pixels.size() * sizeof(uint16_t));
    return h.value();
}

uint64_t digest(const RawMosaic& img) {
    Fnv64 h;
    h.update(&img.width, sizeof img.width);
    h.update(&img.height, sizeof img.height);
    h.update(img.samples.data(), img.samples.size() * sizeof(float));
    return h.value();
}

uint64_t digest(const LinearImage& img) {
    Fnv64 h;
    h.update(&img.width, sizeof img.width);
    h.update(&img.height, sizeof img.height);
    h.update(img.samples.data(), img.samples.size() * sizeof(float));
    return h.value();
}

uint64_t digest(const EncodedImage& img) {
    Fnv64 h;
    h.update(&img.width, sizeof img.width);
    h.update(&img.height, sizeof img.height);
    h.update(img.samples.data(), img.samples.size());
    return h.value();
}

} // namespace flarekit
