#pragma once

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace urp {

/// Thrown when the shapes of two operands do not fit together.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown on malformed image, template or record input.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Row-major grid of 8-bit gray levels.
class GrayImage {
public:
    GrayImage() = default;

    GrayImage(std::size_t height, std::size_t width)
        : height_(height), width_(width), pixels_(height * width, 0) {
        check_dims();
    }

    GrayImage(std::size_t height, std::size_t width, std::vector<int> const& pixels)
        : height_(height), width_(width) {
        check_dims();
        if (pixels.size() != height * width)
            throw DimensionError("pixel count does not match image dimensions");
        pixels_.reserve(pixels.size());
        for (int p : pixels) {
            if (p < 0 || p > 255) throw std::out_of_range("pixel value outside [0,255]");
            pixels_.push_back(static_cast<std::uint8_t>(p));
        }
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return pixels_.size(); }
    bool empty() const noexcept { return pixels_.empty(); }

    int at(std::size_t row, std::size_t col) const { return pixels_.at(row * width_ + col); }
    int operator[](std::size_t flat) const { return pixels_[flat]; }

    void set(std::size_t row, std::size_t col, int value) { set_flat(row * width_ + col, value); }

    void set_flat(std::size_t flat, int value) {
        if (value < 0 || value > 255) throw std::out_of_range("pixel value outside [0,255]");
        pixels_.at(flat) = static_cast<std::uint8_t>(value);
    }

    std::span<std::uint8_t const> pixels() const noexcept { return pixels_; }

    std::vector<int> to_ints() const { return {pixels_.begin(), pixels_.end()}; }

    friend bool operator==(GrayImage const&, GrayImage const&) = default;

private:
    void check_dims() const {
        if (height_ == 0 || width_ == 0) throw DimensionError("image dimensions must be positive");
    }

    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<std::uint8_t> pixels_;
};

/// Squared Euclidean distance between two images of equal shape.
inline double squared_distance(GrayImage const& a, GrayImage const& b) {
    if (a.height() != b.height() || a.width() != b.width())
        throw DimensionError("images differ in shape");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double const d = double(a[i]) - double(b[i]);
        acc += d * d;
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Plain PGM ("P2", maxval 255)
// ---------------------------------------------------------------------------

namespace detail {

inline bool next_pgm_token(std::istream& in, std::string& token) {
    token.clear();
    char c;
    while (in.get(c)) {
        if (c == '#') {
            std::string skip;
            std::getline(in, skip);
            if (!token.empty()) return true;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!token.empty()) return true;
            continue;
        }
        token.push_back(c);
    }
    return !token.empty();
}

inline long parse_pgm_int(std::string const& token, char const* what) {
    if (token.empty() || token.find_first_not_of("0123456789") != std::string::npos)
        throw ParseError(std::string("PGM: invalid ") + what + " '" + token + "'");
    if (token.size() > 9) throw ParseError(std::string("PGM: ") + what + " too large");
    return std::stol(token);
}

}  // namespace detail

inline GrayImage read_pgm(std::istream& in) {
    std::string tok;
    if (!detail::next_pgm_token(in, tok) || tok != "P2") throw ParseError("PGM: expected magic 'P2'");
    long dims[3];
    char const* names[3] = {"width", "height", "maxval"};
    for (int i = 0; i < 3; ++i) {
        if (!detail::next_pgm_token(in, tok)) throw ParseError(std::string("PGM: missing ") + names[i]);
        dims[i] = detail::parse_pgm_int(tok, names[i]);
    }
    if (dims[0] <= 0 || dims[1] <= 0) throw ParseError("PGM: dimensions must be positive");
    if (dims[2] != 255) throw ParseError("PGM: maxval must be 255");
    std::size_t const w = static_cast<std::size_t>(dims[0]);
    std::size_t const h = static_cast<std::size_t>(dims[1]);
    std::vector<int> px;
    px.reserve(w * h);
    for (std::size_t i = 0; i < w * h; ++i) {
        if (!detail::next_pgm_token(in, tok)) throw ParseError("PGM: truncated pixel data");
        long const v = detail::parse_pgm_int(tok, "pixel");
        if (v > 255) throw ParseError("PGM: pixel exceeds maxval");
        px.push_back(static_cast<int>(v));
    }
    if (detail::next_pgm_token(in, tok)) throw ParseError("PGM: trailing data after pixels");
    return GrayImage(h, w, px);
}

inline void write_pgm(std::ostream& out, GrayImage const& img) {
    out << "P2\n" << img.width() << ' ' << img.height() << "\n255\n";
    for (std::size_t r = 0; r < img.height(); ++r) {
        for (std::size_t c = 0; c < img.width(); ++c) {
            if (c) out << ' ';
            out << img.at(r, c);
        }
        out << '\n';
    }
}

inline std::string to_pgm_string(GrayImage const& img) {
    std::ostringstream os;
    write_pgm(os, img);
    return os.str();
}

inline GrayImage from_pgm_string(std::string const& text) {
    std::istringstream is(text);
    return read_pgm(is);
}

inline GrayImage load_pgm(std::string const& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    return read_pgm(in);
}

inline void save_pgm(std::string const& path, GrayImage const& img) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    write_pgm(out, img);
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace urp
