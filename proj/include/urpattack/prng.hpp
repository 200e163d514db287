#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "urpattack/image.hpp"

namespace urp {

inline constexpr std::uint64_t kFnvOffsetBasis = 14695981039346656037ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t hash = kFnvOffsetBasis) noexcept {
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= kFnvPrime;
    }
    return hash;
}

/// SplitMix64 stream (Steele, Lea & Flood). Each instance owns its state.
class SplitMix64 {
public:
    constexpr explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t operator()() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    constexpr std::uint64_t state() const noexcept { return state_; }

    /// Uniform double in [0, 1) from the top 53 bits.
    double uniform() noexcept { return double((*this)() >> 11) * 0x1p-53; }

    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) noexcept {
        // Lemire's multiply-shift; the tiny bias is irrelevant for test data.
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>((*this)()) * bound) >> 64);
    }

    /// Standard normal deviate (Box-Muller, one value per call).
    double normal() noexcept {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double const u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

private:
    std::uint64_t state_;
};

/// Seed derived from the user token.
struct SeedState {
    std::uint64_t state = 0;
    friend bool operator==(SeedState, SeedState) = default;
};

inline SeedState derive_seed(std::string_view password) {
    if (password.empty()) throw std::invalid_argument("password must not be empty");
    return SeedState{fnv1a64(password)};
}

/// Maps a 64-bit stream output to [-0.5, 0.5).
inline double centered_unit(std::uint64_t u) noexcept {
    return double(u >> 11) * 0x1p-53 - 0.5;
}

/// n x m real matrix stored column by column (column j is the vector V_{j+1}).
class ProjectionMatrix {
public:
    ProjectionMatrix() = default;
    ProjectionMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
        if (rows == 0 || cols == 0) throw DimensionError("projection matrix dimensions must be positive");
    }
    ProjectionMatrix(std::size_t rows, std::size_t cols, std::vector<double> column_major)
        : rows_(rows), cols_(cols), data_(std::move(column_major)) {
        if (rows == 0 || cols == 0) throw DimensionError("projection matrix dimensions must be positive");
        if (data_.size() != rows * cols) throw DimensionError("projection matrix data has wrong size");
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double operator()(std::size_t row, std::size_t col) const { return data_[col * rows_ + row]; }
    double& operator()(std::size_t row, std::size_t col) { return data_[col * rows_ + row]; }

    std::span<double const> column(std::size_t col) const { return {data_.data() + col * rows_, rows_}; }
    std::span<double> column(std::size_t col) { return {data_.data() + col * rows_, rows_}; }

    /// Entries in fill order (V_1 first).
    std::span<double const> data() const noexcept { return data_; }

    double column_norm(std::size_t col) const {
        double s = 0.0;
        for (double v : column(col)) s += v * v;
        return std::sqrt(s);
    }

    double max_column_norm() const {
        double best = 0.0;
        for (std::size_t j = 0; j < cols_; ++j) best = std::max(best, column_norm(j));
        return best;
    }

    friend bool operator==(ProjectionMatrix const&, ProjectionMatrix const&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

namespace detail {

inline void fill_column(SplitMix64& stream, std::span<double> col) {
    for (double& v : col) v = centered_unit(stream());
}

inline double dot(std::span<double const> a, std::span<double const> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Classical Gram-Schmidt with one re-orthogonalization pass. A column that
// collapses below 1e-12 is redrawn from the same stream.
inline void orthonormalize_columns(ProjectionMatrix& mat, SplitMix64& stream) {
    for (std::size_t j = 0; j < mat.cols(); ++j) {
        auto col = mat.column(j);
        for (;;) {
            for (int pass = 0; pass < 2; ++pass) {
                std::vector<double> coeff(j);
                for (std::size_t k = 0; k < j; ++k) coeff[k] = dot(mat.column(k), col);
                for (std::size_t k = 0; k < j; ++k) {
                    auto prev = mat.column(k);
                    for (std::size_t i = 0; i < col.size(); ++i) col[i] -= coeff[k] * prev[i];
                }
            }
            double const norm = std::sqrt(dot(col, col));
            if (norm >= 1e-12) {
                for (double& v : col) v /= norm;
                break;
            }
            fill_column(stream, col);
        }
    }
}

}  // namespace detail

/// Derives the keyed projection family V_1..V_m as an n x m matrix.
inline ProjectionMatrix derive_matrix(std::string_view password, std::size_t n, std::size_t m,
                                      bool orthonormalize = false) {
    if (n == 0 || m == 0) throw DimensionError("derive_matrix: n and m must be positive");
    if (orthonormalize && m > n)
        throw DimensionError("derive_matrix: orthonormalization needs m <= n");
    SplitMix64 stream(derive_seed(password).state);
    ProjectionMatrix mat(n, m);
    for (std::size_t j = 0; j < m; ++j) detail::fill_column(stream, mat.column(j));
    if (orthonormalize) detail::orthonormalize_columns(mat, stream);
    return mat;
}

/// FNV-1a over the "%.17g" rendering of every entry in fill order, each
/// rendering terminated by '\n'.
inline std::uint64_t matrix_digest(ProjectionMatrix const& mat) {
    std::uint64_t h = kFnvOffsetBasis;
    char buf[40];
    for (double v : mat.data()) {
        int const len = std::snprintf(buf, sizeof buf, "%.17g\n", v);
        h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(len)), h);
    }
    return h;
}

}  // namespace urp
