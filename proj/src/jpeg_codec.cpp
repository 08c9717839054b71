#include "flarekit/jpeg_codec.hpp"

#include <csetjmp>
#include <cstdio>

#include <jpeglib.h>

#include "flarekit/errors.hpp"

namespace flarekit {

namespace {

struct ErrorContext {
    jpeg_error_mgr mgr;
    jmp_buf env;
    char message[JMSG_LENGTH_MAX];
};

void on_error(j_common_ptr cinfo) {
    auto* ctx = reinterpret_cast<ErrorContext*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, ctx->message);
    longjmp(ctx->env, 1);
}

} // namespace

std::vector<uint8_t> jpeg_encode(const EncodedImage& img, int quality) {
    if (img.width <= 0 || img.height <= 0) throw CodecError("jpeg encode: empty image");

    jpeg_compress_struct cinfo{};
    ErrorContext err{};
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = on_error;

    unsigned char* buffer = nullptr;
    unsigned long buffer_size = 0;

    if (setjmp(err.env)) {
        jpeg_destroy_compress(&cinfo);
        free(buffer);
        throw CodecError(std::string("jpeg encode: ") + err.message);
    }

    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buffer, &buffer_size);

    cinfo.image_width = JDIMENSION(img.width);
    cinfo.image_height = JDIMENSION(img.height);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    // Baseline 4:2:0 chroma subsampling.
    cinfo.comp_info[0].h_samp_factor = 2;
    cinfo.comp_info[0].v_samp_factor = 2;
    cinfo.comp_info[1].h_samp_factor = 1;
    cinfo.comp_info[1].v_samp_factor = 1;
    cinfo.comp_info[2].h_samp_factor = 1;
    cinfo.comp_info[2].v_samp_factor = 1;

    jpeg_start_compress(&cinfo, TRUE);
    const size_t stride = size_t(img.width) * 3;
    while (cinfo.next_scanline < cinfo.image_height) {
        const JSAMPLE* row = img.samples.data() + size_t(cinfo.next_scanline) * stride;
        JSAMPROW rows[1] = {const_cast<JSAMPROW>(row)};
        jpeg_write_scanlines(&cinfo, rows, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);

    std::vector<uint8_t> out(buffer, buffer + buffer_size);
    free(buffer);
    return out;
}

EncodedImage jpeg_decode(const std::vector<uint8_t>& bytes) {
    jpeg_decompress_struct cinfo{};
    ErrorContext err{};
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = on_error;

    if (setjmp(err.env)) {
        jpeg_destroy_decompress(&cinfo);
        throw CodecError(std::string("jpeg decode: ") + err.message);
    }

    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);

    EncodedImage img(int(cinfo.output_width), int(cinfo.output_height));
    const size_t stride = size_t(img.width) * 3;
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW rows[1] = {img.samples.data() + size_t(cinfo.output_scanline) * stride};
        jpeg_read_scanlines(&cinfo, rows, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

} // namespace flarekit
