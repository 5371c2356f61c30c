#pragma once

// Frame sequences (PNG, PGM/PPM), Middlebury .flo flow files and CSV reports.

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "vfba/core.hpp"
#include "vfba/pipeline.hpp"
#include "vfba/warp.hpp"

namespace vfba {

namespace fs = std::filesystem;

/// 8-bit quantization: clamp to [0,1], then round half away from zero.
[[nodiscard]] inline std::uint8_t quantize8(double v) noexcept {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

[[nodiscard]] inline std::uint16_t quantize16(double v) noexcept {
    return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
}

namespace detail {

inline std::string lower_extension(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const fs::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    return f;
}

// Interleaved samples (8 or 16 bit) to a planar frame in [0,1].
inline Frame deinterleave(int height, int width, int channels, int src_channels, const std::vector<std::uint16_t>& samples,
                          double maxval) {
    Frame frame(height, width, channels);
    const double inv = 1.0 / maxval;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::size_t base = (static_cast<std::size_t>(y) * width + x) * src_channels;
            for (int c = 0; c < channels; ++c) {
                frame(c, y, x) = samples[base + static_cast<std::size_t>(c)] * inv;
            }
        }
    }
    return frame;
}

inline Frame read_png(const fs::path& path) {
    FilePtr file = open_file(path, "rb");
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw IoError("'" + path.string() + "' is not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng: cannot create read struct");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng: cannot create info struct");
    }
    std::vector<png_byte> raw;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("'" + path.string() + "': corrupt PNG data");
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth != 8 && depth != 16 && color != PNG_COLOR_TYPE_PALETTE && color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("'" + path.string() + "': unsupported bit depth " + std::to_string(depth));
    }
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int channels = png_get_channels(png, info);
    const int out_depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    raw.resize(rowbytes * static_cast<std::size_t>(height));
    rows.resize(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = raw.data() + rowbytes * static_cast<std::size_t>(y);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    if (channels != 1 && channels != 3) {
        throw IoError("'" + path.string() + "': unsupported channel count " + std::to_string(channels));
    }
    const std::size_t count = static_cast<std::size_t>(width) * height * channels;
    std::vector<std::uint16_t> samples(count);
    if (out_depth == 16) {
        for (std::size_t i = 0; i < count; ++i) {
            samples[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) samples[i] = raw[i];
    }
    return deinterleave(height, width, channels, channels, samples, out_depth == 16 ? 65535.0 : 255.0);
}

struct PngLayout {
    png_uint_32 width;
    png_uint_32 height;
    int bit_depth;
    int color_type;
};

// Kept free of locals with non-trivial lifetimes; longjmp lands here on libpng errors.
inline void write_png_rows(std::FILE* file, const fs::path& path, const PngLayout& layout, png_bytepp rows) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng: cannot create write struct");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng: cannot create info struct");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("'" + path.string() + "': PNG write failed");
    }
    png_init_io(png, file);
    png_set_IHDR(png, info, layout.width, layout.height, layout.bit_depth, layout.color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline void write_png(const fs::path& path, const Frame& frame, int bit_depth) {
    FilePtr file = open_file(path, "wb");
    const int w = frame.width();
    const int h = frame.height();
    const int nc = frame.channels();
    const std::size_t bytes = bit_depth == 16 ? 2 : 1;
    std::vector<png_byte> raw(static_cast<std::size_t>(w) * h * nc * bytes);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < nc; ++c) {
                const std::size_t i = (static_cast<std::size_t>(y) * w + x) * nc + static_cast<std::size_t>(c);
                if (bit_depth == 16) {
                    const std::uint16_t v = quantize16(frame(c, y, x));
                    raw[2 * i] = static_cast<png_byte>(v >> 8);
                    raw[2 * i + 1] = static_cast<png_byte>(v & 0xff);
                } else {
                    raw[i] = quantize8(frame(c, y, x));
                }
            }
        }
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = raw.data() + static_cast<std::size_t>(y) * w * nc * bytes;
    write_png_rows(file.get(), path,
                   {static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth,
                    nc == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY},
                   rows.data());
}

inline Frame read_pnm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P6") {
        throw IoError("'" + path.string() + "': only binary PGM (P5) and PPM (P6) are supported");
    }
    auto next_int = [&]() {
        for (;;) {
            in >> std::ws;
            if (in.peek() == '#') {
                std::string comment;
                std::getline(in, comment);
                continue;
            }
            long v = -1;
            if (!(in >> v)) throw IoError("'" + path.string() + "': malformed header");
            return v;
        }
    };
    const long width = next_int();
    const long height = next_int();
    const long maxval = next_int();
    in.get();
    if (width < 1 || height < 1 || maxval < 1 || maxval > 65535) {
        throw IoError("'" + path.string() + "': unsupported header values");
    }
    const int channels = magic == "P6" ? 3 : 1;
    const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * channels;
    std::vector<std::uint16_t> samples(count);
    if (maxval < 256) {
        std::vector<unsigned char> raw(count);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count));
        if (!in) throw IoError("'" + path.string() + "': truncated pixel data");
        std::copy(raw.begin(), raw.end(), samples.begin());
    } else {
        std::vector<unsigned char> raw(2 * count);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (!in) throw IoError("'" + path.string() + "': truncated pixel data");
        for (std::size_t i = 0; i < count; ++i) {
            samples[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
        }
    }
    return deinterleave(static_cast<int>(height), static_cast<int>(width), channels, channels, samples,
                        static_cast<double>(maxval));
}

inline void write_pnm(const fs::path& path, const Frame& frame) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    const int nc = frame.channels();
    out << (nc == 3 ? "P6" : "P5") << "\n" << frame.width() << " " << frame.height() << "\n255\n";
    std::vector<unsigned char> raw(static_cast<std::size_t>(frame.width()) * frame.height() * nc);
    std::size_t i = 0;
    for (int y = 0; y < frame.height(); ++y) {
        for (int x = 0; x < frame.width(); ++x) {
            for (int c = 0; c < nc; ++c) raw[i++] = quantize8(frame(c, y, x));
        }
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

} // namespace detail

/// Reads a PNG (8/16-bit) or binary PGM/PPM into [0,1]. Alpha is dropped.
inline Frame read_frame(const fs::path& path) {
    if (!fs::exists(path)) {
        throw IoError("missing file '" + path.string() + "'");
    }
    const std::string ext = detail::lower_extension(path);
    if (ext == ".png") return detail::read_png(path);
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return detail::read_pnm(path);
    throw IoError("'" + path.string() + "': unsupported image format (use .png, .ppm or .pgm)");
}

/// Writes 8-bit PNG/PGM/PPM by extension; `bit_depth` 16 is honored for PNG.
inline void write_frame(const fs::path& path, const Frame& frame, int bit_depth = 8) {
    const std::string ext = detail::lower_extension(path);
    if (ext == ".png") {
        detail::write_png(path, frame, bit_depth == 16 ? 16 : 8);
    } else if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") {
        detail::write_pnm(path, frame);
    } else {
        throw IoError("'" + path.string() + "': unsupported image format (use .png, .ppm or .pgm)");
    }
}

/// Writes a scalar plane as a grayscale image after dividing by `scale`.
inline void write_plane_image(const fs::path& path, const Plane& plane, double scale = 1.0) {
    Plane scaled = plane;
    for (auto& v : scaled.values()) v /= scale;
    write_frame(path, Frame(std::vector<Plane>{std::move(scaled)}));
}

// ---------------------------------------------------------------------------
// Sequences

/// Expands a printf-style numbered file pattern ("f%04d.png") for one index.
/// Exactly one integer conversion (%d, %0Nd, %Nd) is allowed; "%%" is a literal percent.
inline std::string format_index(const std::string& pattern, int index) {
    std::string out;
    int conversions = 0;
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        if (pattern[i] != '%') {
            out += pattern[i];
            continue;
        }
        if (i + 1 < pattern.size() && pattern[i + 1] == '%') {
            out += '%';
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        const bool zero = j < pattern.size() && pattern[j] == '0';
        if (zero) ++j;
        int width = 0;
        while (j < pattern.size() && std::isdigit(static_cast<unsigned char>(pattern[j]))) {
            width = width * 10 + (pattern[j] - '0');
            ++j;
        }
        if (j >= pattern.size() || pattern[j] != 'd') {
            throw ConfigError("pattern '" + pattern + "': only %d style conversions are supported");
        }
        std::string digits = std::to_string(index < 0 ? -index : index);
        const std::size_t sign = index < 0 ? 1 : 0;
        if (static_cast<std::size_t>(width) > digits.size() + sign) {
            digits.insert(0, static_cast<std::size_t>(width) - digits.size() - sign, zero ? '0' : ' ');
        }
        if (index < 0) {
            digits.insert(zero ? 0 : digits.find_first_not_of(' '), "-");
        }
        out += digits;
        ++conversions;
        i = j;
    }
    if (conversions != 1) {
        throw ConfigError("pattern '" + pattern + "' must contain exactly one %d conversion");
    }
    return out;
}

struct FrameRange {
    int first = 0;
    int last = 0;

    [[nodiscard]] int count() const noexcept { return last - first + 1; }
};

/// Parses "a..b" (inclusive, a <= b).
inline FrameRange parse_range(const std::string& text) {
    const auto sep = text.find("..");
    if (sep == std::string::npos) {
        throw ConfigError("frame range '" + text + "' must look like a..b");
    }
    try {
        std::size_t used_a = 0;
        std::size_t used_b = 0;
        const std::string a = text.substr(0, sep);
        const std::string b = text.substr(sep + 2);
        FrameRange r{std::stoi(a, &used_a), std::stoi(b, &used_b)};
        if (used_a != a.size() || used_b != b.size() || r.last < r.first) {
            throw ConfigError("");
        }
        return r;
    } catch (const std::exception&) {
        throw ConfigError("frame range '" + text + "' must look like a..b with a <= b");
    }
}

struct SequenceSpec {
    std::string input_pattern;
    FrameRange range;
    fs::path output_dir;
    std::string output_pattern = "%04d.png";

    [[nodiscard]] std::vector<fs::path> input_files() const {
        std::vector<fs::path> files;
        for (int i = range.first; i <= range.last; ++i) files.emplace_back(format_index(input_pattern, i));
        return files;
    }
};

/// Reads every frame of the range; all frames must share dimensions and channels.
inline std::vector<Frame> read_frame_sequence(const SequenceSpec& spec) {
    const auto files = spec.input_files();
    if (files.empty()) {
        throw ConfigError("empty frame range");
    }
    std::vector<Frame> frames;
    frames.reserve(files.size());
    for (const auto& f : files) {
        Frame frame = read_frame(f);
        if (!frames.empty() && !frame.same_shape(frames.front())) {
            throw DimensionError("'" + f.string() + "' is " + std::to_string(frame.width()) + "x" +
                                 std::to_string(frame.height()) + "x" + std::to_string(frame.channels()) +
                                 " but '" + files.front().string() + "' is " + std::to_string(frames.front().width()) +
                                 "x" + std::to_string(frames.front().height()) + "x" +
                                 std::to_string(frames.front().channels()));
        }
        frames.push_back(std::move(frame));
    }
    return frames;
}

/// Writes frames as output_dir / format(output_pattern, range.first + i).
inline std::vector<fs::path> write_frame_sequence(const SequenceSpec& spec, const std::vector<Frame>& frames) {
    fs::create_directories(spec.output_dir);
    std::vector<fs::path> written;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const fs::path p = spec.output_dir / format_index(spec.output_pattern, spec.range.first + static_cast<int>(i));
        write_frame(p, frames[i]);
        written.push_back(p);
    }
    return written;
}

// ---------------------------------------------------------------------------
// Middlebury .flo

inline constexpr float kFloMagic = 202021.25f;

namespace detail {

inline void put_le32(std::ostream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

inline std::uint32_t get_le32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IoError("truncated .flo file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace detail

/// Magic 202021.25f, width, height (int32), then interleaved (dx, dy) float32, all little-endian.
inline void write_flow_flo(const fs::path& path, const FlowField& flow) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    detail::put_le32(out, std::bit_cast<std::uint32_t>(kFloMagic));
    detail::put_le32(out, static_cast<std::uint32_t>(flow.width()));
    detail::put_le32(out, static_cast<std::uint32_t>(flow.height()));
    for (int y = 0; y < flow.height(); ++y) {
        for (int x = 0; x < flow.width(); ++x) {
            const double dx = flow.dx(y, x);
            const double dy = flow.dy(y, x);
            if (!std::isfinite(dx) || !std::isfinite(dy)) {
                throw IoError("write_flow_flo: non-finite flow value");
            }
            detail::put_le32(out, std::bit_cast<std::uint32_t>(static_cast<float>(dx)));
            detail::put_le32(out, std::bit_cast<std::uint32_t>(static_cast<float>(dy)));
        }
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline FlowField read_flow_flo(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    if (std::bit_cast<float>(detail::get_le32(in)) != kFloMagic) {
        throw IoError("'" + path.string() + "' is not a Middlebury .flo file");
    }
    const auto width = static_cast<std::int32_t>(detail::get_le32(in));
    const auto height = static_cast<std::int32_t>(detail::get_le32(in));
    if (width < 1 || height < 1 || static_cast<std::int64_t>(width) * height > (std::int64_t{1} << 30)) {
        throw IoError("'" + path.string() + "': implausible dimensions");
    }
    FlowField flow(height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            flow.dx(y, x) = std::bit_cast<float>(detail::get_le32(in));
            flow.dy(y, x) = std::bit_cast<float>(detail::get_le32(in));
        }
    }
    return flow;
}

// ---------------------------------------------------------------------------
// CSV

inline void write_iteration_csv(const fs::path& path, const IterationReport& report) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << "iteration,frame,mean_squared_change\n";
    out.precision(10);
    for (std::size_t it = 0; it < report.frame_change.size(); ++it) {
        for (std::size_t f = 0; f < report.frame_change[it].size(); ++f) {
            out << it + 1 << ',' << f << ',' << report.frame_change[it][f] << '\n';
        }
    }
}

} // namespace vfba
