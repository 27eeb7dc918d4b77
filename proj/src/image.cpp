#include "pcnst/image.hpp"

#include "pcnst/error.hpp"
#include "pcnst/io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

#ifdef PCNST_HAVE_PNG
#include <png.h>
#endif

namespace pcnst {

namespace fs = std::filesystem;

namespace {

constexpr unsigned char kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

std::vector<unsigned char> read_all(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_png(const std::vector<unsigned char>& bytes) {
    return bytes.size() >= 8 && std::equal(std::begin(kPngSignature), std::end(kPngSignature),
                                           bytes.begin());
}

class PpmReader {
public:
    PpmReader(const std::vector<unsigned char>& bytes, std::string name)
        : bytes_(bytes), name_(std::move(name)) {}

    RgbImage decode() {
        if (bytes_.size() < 2 || bytes_[0] != 'P') {
            fail("not a PPM file");
        }
        const char kind = static_cast<char>(bytes_[1]);
        if (kind == '5' || kind == '2' || kind == '4' || kind == '1') {
            fail("non-RGB image (PBM/PGM) is not supported");
        }
        if (kind != '6') {
            fail(std::string("unsupported PPM variant P") + kind);
        }
        pos_ = 2;
        const long width = read_header_int();
        const long height = read_header_int();
        const long maxval = read_header_int();
        if (width <= 0 || height <= 0) {
            fail("image dimensions must be positive");
        }
        if (maxval <= 0 || maxval > 65535) {
            fail("maxval out of range");
        }
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
            fail("missing whitespace after header");
        }
        ++pos_;
        const std::size_t samples = static_cast<std::size_t>(width) * height * 3;
        const std::size_t sample_bytes = maxval < 256 ? 1 : 2;
        if (bytes_.size() - pos_ < samples * sample_bytes) {
            fail("truncated pixel data");
        }
        RgbImage image;
        image.width = width;
        image.height = height;
        image.pixels.resize(samples);
        for (std::size_t i = 0; i < samples; ++i) {
            unsigned value = bytes_[pos_ + i * sample_bytes];
            if (sample_bytes == 2) {
                value = (value << 8) | bytes_[pos_ + i * sample_bytes + 1];
            }
            image.pixels[i] = static_cast<std::uint8_t>(
                (static_cast<unsigned long>(value) * 255UL + maxval / 2) / maxval);
        }
        return image;
    }

private:
    [[noreturn]] void fail(const std::string& message) const {
        throw ParseError(name_ + ": " + message);
    }

    long read_header_int() {
        while (pos_ < bytes_.size()) {
            if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') {
                    ++pos_;
                }
            } else if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
        long value = 0;
        std::size_t digits = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > 1'000'000'000L) {
                fail("header value too large");
            }
            ++pos_;
            ++digits;
        }
        if (digits == 0) {
            fail("malformed header");
        }
        return value;
    }

    const std::vector<unsigned char>& bytes_;
    std::string name_;
    std::size_t pos_ = 0;
};

#ifdef PCNST_HAVE_PNG
RgbImage decode_png(const fs::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&png, path.string().c_str()) == 0) {
        throw ParseError(path.string() + ": " + png.message);
    }
    if ((png.format & PNG_FORMAT_FLAG_COLOR) == 0) {
        png_image_free(&png);
        throw ParseError(path.string() + ": non-RGB image (grayscale PNG) is not supported");
    }
    png.format = PNG_FORMAT_RGB;
    RgbImage image;
    image.width = png.width;
    image.height = png.height;
    image.pixels.resize(PNG_IMAGE_SIZE(png));
    if (png_image_finish_read(&png, nullptr, image.pixels.data(), 0, nullptr) == 0) {
        const std::string message = png.message;
        png_image_free(&png);
        throw ParseError(path.string() + ": " + message);
    }
    return image;
}
#endif

}  // namespace

bool png_supported() {
#ifdef PCNST_HAVE_PNG
    return true;
#else
    return false;
#endif
}

RgbImage read_image(const fs::path& path) {
    const auto bytes = read_all(path);
    if (is_png(bytes)) {
#ifdef PCNST_HAVE_PNG
        return decode_png(path);
#else
        throw ParseError(path.string() + ": PNG support was not built");
#endif
    }
    return PpmReader(bytes, path.string()).decode();
}

void write_ppm(const RgbImage& image, const fs::path& path) {
    if (image.pixels.size() != static_cast<std::size_t>(image.width * image.height * 3)) {
        throw ShapeError("write_ppm: pixel buffer does not match dimensions");
    }
    write_file_atomically(
        path,
        [&](std::ostream& out) {
            out << "P6\n" << image.width << " " << image.height << "\n255\n";
            out.write(reinterpret_cast<const char*>(image.pixels.data()),
                      static_cast<std::streamsize>(image.pixels.size()));
        },
        true);
}

PixelSet to_pixel_set(const RgbImage& image) {
    const Eigen::Index count = image.height * image.width;
    if (count <= 0 || image.pixels.size() != static_cast<std::size_t>(count * 3)) {
        throw ShapeError("image: pixel buffer does not match dimensions");
    }
    PixelSet set;
    set.height = image.height;
    set.width = image.width;
    set.colors.resize(count, 3);
    for (Eigen::Index i = 0; i < count * 3; ++i) {
        set.colors.data()[i] = 2.0 * image.pixels[static_cast<std::size_t>(i)] / 255.0 - 1.0;
    }
    return set;
}

PixelSet image_to_pixel_set(const fs::path& path) {
    return to_pixel_set(read_image(path));
}

bool looks_like_image(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    unsigned char head[8] = {};
    in.read(reinterpret_cast<char*>(head), 8);
    const auto got = in.gcount();
    if (got >= 2 && head[0] == 'P' && head[1] >= '1' && head[1] <= '6') {
        return true;
    }
    return got == 8 && std::equal(std::begin(kPngSignature), std::end(kPngSignature), head);
}

}  // namespace pcnst
