#include "flarekit/image_io.hpp"

#include <cctype>
#include <cstdio>
#include <cstring>
#include <json.hpp>
#include <sstream>

#include <png.h>

#include "flarekit/jpeg_codec.hpp"
#include "flarekit/util.hpp"

using nlohmann::json;

namespace flarekit {

void save_png(const std::string& path, const EncodedImage& img) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw CodecError("png writer init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw CodecError("png write failed: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const size_t stride = size_t(img.width) * 3;
    for (int y = 0; y < img.height; ++y)
        png_write_row(png, const_cast<png_bytep>(img.samples.data() + size_t(y) * stride));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

EncodedImage load_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw CodecError("png reader init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw CodecError("png read failed: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    EncodedImage img(int(png_get_image_width(png, info)), int(png_get_image_height(png, info)));
    if (png_get_rowbytes(png, info) != size_t(img.width) * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw CodecError("unexpected png row layout: " + path);
    }
    for (int y = 0; y < img.height; ++y)
        png_read_row(png, img.samples.data() + size_t(y) * img.width * 3, nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

void save_jpeg(const std::string& path, const EncodedImage& img, int quality) {
    const auto bytes = jpeg_encode(img, quality);
    write_binary_file(path, bytes.data(), bytes.size());
}

EncodedImage load_jpeg(const std::string& path) { return jpeg_decode(read_binary_file(path)); }

EncodedImage load_encoded(const std::string& path) {
    const auto dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    if (ext == ".png") return load_png(path);
    if (ext == ".jpg" || ext == ".jpeg") return load_jpeg(path);
    throw IoError("unsupported encoded-image extension: " + path);
}

void save_pfm(const std::string& path, const LinearImage& img) {
    std::ostringstream header;
    header << "PF\n" << img.width << " " << img.height << "\n-1.0\n";
    std::string data = header.str();
    const size_t stride = size_t(img.width) * 3 * sizeof(float);
    data.reserve(data.size() + stride * size_t(img.height));
    // PFM rows run bottom-up.
    for (int y = img.height - 1; y >= 0; --y) {
        const char* row = reinterpret_cast<const char*>(img.samples.data()) +
                          size_t(y) * stride;
        data.append(row, stride);
    }
    write_binary_file(path, data.data(), data.size());
}

LinearImage load_pfm(const std::string& path) {
    const auto bytes = read_binary_file(path);
    // Header: "PF\n{w} {h}\n{scale}\n"
    size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
        const size_t start = pos;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
        return std::string(bytes.begin() + long(start), bytes.begin() + long(pos));
    };
    const std::string magic = token();
    if (magic != "PF") throw ParseError("not a color PFM file: " + path);
    int w = 0, h = 0;
    double scale = 0.0;
    try {
        w = std::stoi(token());
        h = std::stoi(token());
        scale = std::stod(token());
    } catch (const std::exception&) {
        throw ParseError("bad PFM header: " + path);
    }
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw ParseError("bad PFM header: " + path);
    ++pos;
    if (w <= 0 || h <= 0) throw ParseError("bad PFM dimensions: " + path);
    if (scale >= 0) throw ParseError("big-endian PFM not supported: " + path);

    const size_t stride = size_t(w) * 3 * sizeof(float);
    if (bytes.size() - pos < stride * size_t(h)) throw ParseError("truncated PFM: " + path);
    LinearImage img(w, h);
    for (int y = h - 1; y >= 0; --y) {
        std::memcpy(reinterpret_cast<char*>(img.samples.data()) + size_t(y) * stride,
                    bytes.data() + pos, stride);
        pos += stride;
    }
    return img;
}

std::string raw_sidecar_path(const std::string& pgm_path) { return pgm_path + ".json"; }

void save_raw(const std::string& pgm_path, const RawImage& raw) {
    raw.validate();
    std::ostringstream header;
    header << "P5\n" << raw.width << " " << raw.height << "\n" << raw.white_level << "\n";
    std::string data = header.str();
    data.reserve(data.size() + raw.pixels.size() * 2);
    for (uint16_t p : raw.pixels) {
        data.push_back(char(p >> 8)); // big-endian per PGM
        data.push_back(char(p & 0xff));
    }
    write_binary_file(pgm_path, data.data(), data.size());

    json j;
    j["cfa"] = cfa_name(raw.cfa);
    j["bit_depth"] = raw.bit_depth;
    j["black_level"] = raw.black_level;
    j["white_level"] = raw.white_level;
    j["wb_gains"] = raw.wb_gains;
    j["color_matrix"] = raw.color_matrix;
    write_text_file(raw_sidecar_path(pgm_path), j.dump(2) + "\n");
}

RawImage load_raw(const std::string& pgm_path) {
    const auto bytes = read_binary_file(pgm_path);
    size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
        const size_t start = pos;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
        return std::string(bytes.begin() + long(start), bytes.begin() + long(pos));
    };
    if (token() != "P5") throw ParseError("not a P5 PGM: " + pgm_path);
    RawImage raw;
    int maxval = 0;
    try {
        raw.width = std::stoi(token());
        raw.height = std::stoi(token());
        maxval = std::stoi(token());
    } catch (const std::exception&) {
        throw ParseError("bad PGM header: " + pgm_path);
    }
    if (pos >= bytes.size() || !std::isspace(bytes[pos]))
        throw ParseError("bad PGM header: " + pgm_path);
    ++pos;
    if (maxval <= 255 || maxval > 65535)
        throw ParseError("raw PGM must be 16-bit (maxval in [256,65535]): " + pgm_path);
    const size_t n = size_t(raw.width) * raw.height;
    if (bytes.size() - pos < n * 2) throw ParseError("truncated PGM: " + pgm_path);
    raw.pixels.resize(n);
    for (size_t i = 0; i < n; ++i)
        raw.pixels[i] = uint16_t((bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1]);

    const std::string sidecar = raw_sidecar_path(pgm_path);
    json j;
    try {
        j = json::parse(read_text_file(sidecar));
    } catch (const json::exception& e) {
        throw ParseError("raw sidecar " + sidecar + ": " + e.what());
    }
    auto require = [&](const char* field) -> const json& {
        if (!j.contains(field))
            throw ParseError("raw sidecar " + sidecar + ": missing field '" + field + "'");
        return j.at(field);
    };
    try {
        raw.cfa = cfa_from_name(require("cfa").get<std::string>());
        raw.bit_depth = require("bit_depth").get<int>();
        raw.black_level = require("black_level").get<std::array<int, 4>>();
        raw.white_level = require("white_level").get<int>();
        raw.wb_gains = require("wb_gains").get<std::array<float, 3>>();
        raw.color_matrix = require("color_matrix").get<std::array<float, 9>>();
    } catch (const json::exception& e) {
        throw ParseError("raw sidecar " + sidecar + ": " + e.what());
    }
    if (maxval != raw.white_level)
        throw ParseError("raw sidecar white_level disagrees with PGM maxval: " + pgm_path);
    raw.validate();
    return raw;
}

} // namespace flarekit
