#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "urpattack/image.hpp"
#include "urpattack/prng.hpp"

namespace urp {

using Kernel3 = std::array<std::array<double, 3>, 3>;

/// Horizontal Sobel kernel G1.
inline constexpr Kernel3 kSobelG1{{{1, 0, -1}, {2, 0, -2}, {1, 0, -1}}};
/// Vertical Sobel kernel G2.
inline constexpr Kernel3 kSobelG2{{{1, 2, 1}, {0, 0, 0}, {-1, -2, -1}}};

/// Kernel rotated by 180 degrees.
constexpr Kernel3 rotate180(Kernel3 const& k) {
    Kernel3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r[i][j] = k[2 - i][2 - j];
    return r;
}

/// Image surrounded by a ring of zero pixels.
class PaddedImage {
public:
    explicit PaddedImage(GrayImage inner)
        : inner_(std::move(inner)) {}

    GrayImage const& inner() const noexcept { return inner_; }
    std::size_t padded_height() const noexcept { return inner_.height() + 2; }
    std::size_t padded_width() const noexcept { return inner_.width() + 2; }

    /// Cell of the padded grid; row 0, column 0 and the last row/column are border.
    int at(std::size_t prow, std::size_t pcol) const {
        if (prow == 0 || pcol == 0 || prow > inner_.height() || pcol > inner_.width()) return 0;
        return inner_.at(prow - 1, pcol - 1);
    }

private:
    GrayImage inner_;
};

/// Dense real matrix, row-major.
struct RealGrid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

/// 3x3 convolution over the zero-padded image; the kernel is flipped, i.e.
/// out(i,j) = sum_{a,b} k[2-a][2-b] * window[a][b].
inline RealGrid convolve(Kernel3 const& kernel, PaddedImage const& image) {
    std::size_t const h = image.inner().height();
    std::size_t const w = image.inner().width();
    RealGrid out{h, w, std::vector<double>(h * w, 0.0)};
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            double acc = 0.0;
            for (std::size_t a = 0; a < 3; ++a)
                for (std::size_t b = 0; b < 3; ++b)
                    acc += kernel[2 - a][2 - b] * image.at(i + a, j + b);
            out(i, j) = acc;
        }
    }
    return out;
}

/// Non-negative real feature vector (flattened gradient magnitudes).
class FeatureVector {
public:
    FeatureVector() = default;
    explicit FeatureVector(std::vector<double> values) : values_(std::move(values)) {
        for (double v : values_)
            if (!(v >= 0.0)) throw std::invalid_argument("feature entries must be non-negative");
    }

    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    std::span<double const> values() const noexcept { return values_; }

    friend bool operator==(FeatureVector const&, FeatureVector const&) = default;

private:
    std::vector<double> values_;
};

/// Coordinate-wise gradient magnitude sqrt(Gx^2 + Gy^2), flattened row-major.
inline FeatureVector sobel(GrayImage const& image) {
    PaddedImage const padded(image);
    RealGrid const gx = convolve(kSobelG1, padded);
    RealGrid const gy = convolve(kSobelG2, padded);
    std::vector<double> out(image.size());
    for (std::size_t k = 0; k < out.size(); ++k)
        out[k] = std::sqrt(gx.values[k] * gx.values[k] + gy.values[k] * gy.values[k]);
    return FeatureVector(std::move(out));
}

/// Protected template: one bit per projection direction.
class Template {
public:
    Template() = default;
    explicit Template(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
        for (auto b : bits_)
            if (b > 1) throw std::invalid_argument("template bits must be 0 or 1");
    }

    std::size_t size() const noexcept { return bits_.size(); }
    int operator[](std::size_t i) const { return bits_[i]; }
    std::span<std::uint8_t const> bits() const noexcept { return bits_; }

    Template with_flipped(std::size_t i) const {
        Template t = *this;
        t.bits_.at(i) ^= 1u;
        return t;
    }

    /// ASCII bit string, t_1 first.
    std::string to_string() const {
        std::string s;
        s.reserve(bits_.size());
        for (auto b : bits_) s.push_back(b ? '1' : '0');
        return s;
    }

    static Template from_string(std::string_view text) {
        std::vector<std::uint8_t> bits;
        bits.reserve(text.size());
        for (char c : text) {
            if (c != '0' && c != '1') throw ParseError("template: expected only '0'/'1' characters");
            bits.push_back(static_cast<std::uint8_t>(c - '0'));
        }
        if (bits.empty()) throw ParseError("template: empty bit string");
        return Template(std::move(bits));
    }

    /// Lowercase hex, t_1 as the most significant bit of the first nibble,
    /// zero-padded on the right to a whole nibble.
    std::string to_hex() const {
        static constexpr char digits[] = "0123456789abcdef";
        std::string s;
        for (std::size_t i = 0; i < bits_.size(); i += 4) {
            unsigned nib = 0;
            for (std::size_t k = 0; k < 4; ++k) {
                nib <<= 1;
                if (i + k < bits_.size()) nib |= bits_[i + k];
            }
            s.push_back(digits[nib]);
        }
        return s;
    }

    static Template from_hex(std::string_view hex, std::size_t bit_length) {
        if (bit_length == 0) throw ParseError("template: bit length must be positive");
        if (hex.size() != (bit_length + 3) / 4) throw ParseError("template: hex length does not match bit length");
        std::vector<std::uint8_t> bits;
        bits.reserve(bit_length);
        for (char c : hex) {
            unsigned nib;
            if (c >= '0' && c <= '9') nib = unsigned(c - '0');
            else if (c >= 'a' && c <= 'f') nib = unsigned(c - 'a' + 10);
            else throw ParseError("template: invalid lowercase hex digit");
            for (int k = 3; k >= 0; --k) {
                std::uint8_t const b = (nib >> k) & 1u;
                if (bits.size() < bit_length) bits.push_back(b);
                else if (b) throw ParseError("template: non-zero padding bits");
            }
        }
        return Template(std::move(bits));
    }

    friend bool operator==(Template const&, Template const&) = default;

private:
    std::vector<std::uint8_t> bits_;
};

/// Row vector times matrix: result_j = sum_i feature_i * M(i, j).
inline std::vector<double> project(std::span<double const> feature, ProjectionMatrix const& matrix) {
    if (feature.size() != matrix.rows())
        throw DimensionError("feature length " + std::to_string(feature.size()) +
                             " does not match matrix rows " + std::to_string(matrix.rows()));
    std::vector<double> out(matrix.cols());
    for (std::size_t j = 0; j < matrix.cols(); ++j) {
        auto col = matrix.column(j);
        double acc = 0.0;
        for (std::size_t i = 0; i < feature.size(); ++i) acc += feature[i] * col[i];
        out[j] = acc;
    }
    return out;
}

inline std::vector<double> project(FeatureVector const& feature, ProjectionMatrix const& matrix) {
    return project(feature.values(), matrix);
}

/// Sign threshold: negative -> 0, zero or positive -> 1.
inline Template binarize(std::span<double const> projected) {
    std::vector<std::uint8_t> bits(projected.size());
    for (std::size_t i = 0; i < projected.size(); ++i) bits[i] = projected[i] < 0.0 ? 0 : 1;
    return Template(std::move(bits));
}

/// Template of `image` under an already-derived matrix.
inline Template enroll_with(GrayImage const& image, ProjectionMatrix const& matrix) {
    return binarize(project(sobel(image), matrix));
}

inline Template enroll(GrayImage const& image, std::string_view password, std::size_t m,
                       bool orthonormalize = false) {
    return enroll_with(image, derive_matrix(password, image.size(), m, orthonormalize));
}

struct VerifyDecision {
    std::size_t distance = 0;
    std::size_t threshold = 0;
    bool accepted = false;
};

inline std::size_t hamming_distance(Template const& a, Template const& b) {
    if (a.size() != b.size()) throw DimensionError("templates differ in length");
    std::size_t d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
    return d;
}

inline VerifyDecision verify(Template const& a, Template const& b, std::size_t threshold) {
    std::size_t const d = hamming_distance(a, b);
    return {d, threshold, d <= threshold};
}

}  // namespace urp
