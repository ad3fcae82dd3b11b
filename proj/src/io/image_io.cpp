#include "warpfuse/io/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace warpfuse::io {

namespace {

std::string lower_ext(const std::string& path) {
    const size_t dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

uint8_t quantize(double v, int* clamped) {
    if (v < 0.0) {
        v = 0.0;
        ++*clamped;
    } else if (v > 1.0) {
        v = 1.0;
        ++*clamped;
    }
    return static_cast<uint8_t>(std::floor(v * 255.0 + 0.5));  // half-up
}

// --- PGM ------------------------------------------------------------------

int pgm_token(std::istream& in) {
    // Skips whitespace and '#' comment lines, then reads one unsigned integer.
    char c;
    while (in.get(c)) {
        if (c == '#') {
            while (in.get(c) && c != '\n') {
            }
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            in.unget();
            break;
        }
    }
    int v = -1;
    in >> v;
    return in ? v : -1;
}

FeatureMap load_pgm(const std::string& path, std::ifstream& in) {
    char magic[2];
    if (!in.read(magic, 2) || magic[0] != 'P' || magic[1] != '5') {
        throw IoError("not a P5 PGM: " + path);
    }
    const int w = pgm_token(in);
    const int h = pgm_token(in);
    const int maxval = pgm_token(in);
    if (w <= 0 || h <= 0) throw IoError("bad PGM dimensions: " + path);
    if (maxval != 255) throw IoError("unsupported PGM maxval (need 255): " + path);
    in.get();  // single whitespace byte before the raster

    std::vector<uint8_t> raw(static_cast<size_t>(w) * h);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        throw IoError("truncated PGM raster: " + path);
    }
    FeatureMap img(h, w, 1);
    for (size_t i = 0; i < raw.size(); ++i) img.data()[i] = raw[i] / 255.0;
    return img;
}

void save_pgm(const FeatureMap& map, const std::string& path, int* clamped) {
    if (map.channels() != 1) throw IoError("PGM supports exactly 1 channel: " + path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "P5\n" << map.width() << " " << map.height() << "\n255\n";
    std::vector<uint8_t> raw(map.size());
    for (size_t i = 0; i < map.size(); ++i) raw[i] = quantize(map.data()[i], clamped);
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("write failed: " + path);
}

// --- PNG ------------------------------------------------------------------

struct PngReadCtx {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngReadCtx() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngWriteCtx {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngWriteCtx() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

FeatureMap load_png(const std::string& path) {
    PngReadCtx ctx;
    ctx.fp = std::fopen(path.c_str(), "rb");
    if (!ctx.fp) throw IoError("cannot open: " + path);
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.png || !ctx.info) throw IoError("png init failed: " + path);
    if (setjmp(png_jmpbuf(ctx.png))) throw IoError("malformed PNG: " + path);

    png_init_io(ctx.png, ctx.fp);
    png_read_info(ctx.png, ctx.info);

    const png_uint_32 w = png_get_image_width(ctx.png, ctx.info);
    const png_uint_32 h = png_get_image_height(ctx.png, ctx.info);
    const int depth = png_get_bit_depth(ctx.png, ctx.info);
    const int color = png_get_color_type(ctx.png, ctx.info);
    if (depth != 8 || (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB)) {
        throw IoError("unsupported PNG (need 8-bit gray or 24-bit RGB): " + path);
    }
    const int channels = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;

    std::vector<uint8_t> raw(static_cast<size_t>(w) * h * channels);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + static_cast<size_t>(y) * w * channels;
    png_read_image(ctx.png, rows.data());
    png_read_end(ctx.png, nullptr);

    FeatureMap img(static_cast<int>(h), static_cast<int>(w), channels);
    for (size_t i = 0; i < raw.size(); ++i) img.data()[i] = raw[i] / 255.0;
    return img;
}

void save_png(const FeatureMap& map, const std::string& path, int* clamped) {
    if (map.channels() != 1 && map.channels() != 3) {
        throw IoError("PNG supports 1 or 3 channels: " + path);
    }
    PngWriteCtx ctx;
    ctx.fp = std::fopen(path.c_str(), "wb");
    if (!ctx.fp) throw IoError("cannot open for writing: " + path);
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.png || !ctx.info) throw IoError("png init failed: " + path);
    if (setjmp(png_jmpbuf(ctx.png))) throw IoError("png write failed: " + path);

    png_init_io(ctx.png, ctx.fp);
    png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(map.width()),
                 static_cast<png_uint_32>(map.height()), 8,
                 map.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);

    const size_t stride = static_cast<size_t>(map.width()) * map.channels();
    std::vector<uint8_t> raw(map.size());
    for (size_t i = 0; i < map.size(); ++i) raw[i] = quantize(map.data()[i], clamped);
    for (int y = 0; y < map.height(); ++y) {
        png_write_row(ctx.png, raw.data() + static_cast<size_t>(y) * stride);
    }
    png_write_end(ctx.png, nullptr);
}

}  // namespace

FeatureMap load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    char magic[2] = {0, 0};
    in.read(magic, 2);
    in.seekg(0);
    if (magic[0] == 'P' && magic[1] == '5') return load_pgm(path, in);
    if (static_cast<unsigned char>(magic[0]) == 0x89 && magic[1] == 'P') {
        in.close();
        return load_png(path);
    }
    throw IoError("unrecognized image format: " + path);
}

int save_image(const FeatureMap& map, const std::string& path) {
    if (map.empty()) throw std::invalid_argument("save_image: empty map");
    int clamped = 0;
    const std::string ext = lower_ext(path);
    if (ext == ".pgm") {
        save_pgm(map, path, &clamped);
    } else if (ext == ".png") {
        save_png(map, path, &clamped);
    } else {
        throw IoError("unsupported output extension (need .pgm or .png): " + path);
    }
    return clamped;
}

int save_image(const SaliencyMap& map, const std::string& path) {
    return save_image(to_feature_map(map), path);
}

SaliencyMap to_saliency(const FeatureMap& map) {
    if (map.channels() != 1) {
        throw std::invalid_argument("to_saliency: map must have exactly 1 channel");
    }
    SaliencyMap s(map.height(), map.width());
    s.values = map.data();
    return s;
}

FeatureMap to_feature_map(const SaliencyMap& map) {
    FeatureMap f(map.height, map.width, 1);
    f.data() = map.values;
    return f;
}

}  // namespace warpfuse::io
