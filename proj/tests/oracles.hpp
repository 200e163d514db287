#pragma once

// Test-only reference implementations. Nothing here calls into the solver;
// the forward map is re-derived from the convolution definition.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "urpattack/pipeline.hpp"
#include "urpattack/prng.hpp"

namespace oracle {

/// Straight double sum of the convolution definition on the zero-padded
/// image: out(i,j) = sum_{a,b} k[2-a][2-b] * I(i-1+a, j-1+b).
inline std::vector<double> convolve_definition(urp::Kernel3 const& k, std::vector<int> const& px, std::size_t h,
                                               std::size_t w) {
    std::vector<double> out(h * w, 0.0);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            double s = 0.0;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) {
                    long const r = long(i) - 1 + a, c = long(j) - 1 + b;
                    double const v = (r < 0 || c < 0 || r >= long(h) || c >= long(w)) ? 0.0 : px[r * w + c];
                    s += k[2 - a][2 - b] * v;
                }
            out[i * w + j] = s;
        }
    return out;
}

inline std::vector<double> sobel_definition(std::vector<int> const& px, std::size_t h, std::size_t w) {
    auto const gx = convolve_definition(urp::kSobelG1, px, h, w);
    auto const gy = convolve_definition(urp::kSobelG2, px, h, w);
    std::vector<double> out(h * w);
    for (std::size_t p = 0; p < out.size(); ++p) out[p] = std::sqrt(gx[p] * gx[p] + gy[p] * gy[p]);
    return out;
}

inline std::vector<int> template_definition(std::vector<double> const& f, urp::ProjectionMatrix const& m) {
    std::vector<int> bits(m.cols());
    for (std::size_t k = 0; k < m.cols(); ++k) {
        double p = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) p += f[i] * m(i, k);
        bits[k] = p < 0.0 ? 0 : 1;
    }
    return bits;
}

struct Victim {
    urp::ProjectionMatrix matrix;
    urp::Template target;
};

/// Exact minimum of ||X - anchor||^2 over integer images in [0,255]^n whose
/// templates match every victim. Depth-first branch and bound over pixel
/// boxes: a box is dropped when its distance lower bound cannot beat the
/// incumbent or when interval bounds on the projections rule out a target
/// bit. Leaves are checked with the definition-based forward map.
class ExhaustiveOptimum {
public:
    ExhaustiveOptimum(std::size_t h, std::size_t w, std::vector<int> anchor, std::vector<Victim> victims)
        : h_(h), w_(w), n_(h * w), anchor_(std::move(anchor)), victims_(std::move(victims)) {
        wx_.assign(n_ * n_, 0.0);
        wy_.assign(n_ * n_, 0.0);
        for (std::size_t q = 0; q < n_; ++q) {
            std::vector<int> unit(n_, 0);
            unit[q] = 1;
            auto const gx = convolve_definition(urp::kSobelG1, unit, h, w);
            auto const gy = convolve_definition(urp::kSobelG2, unit, h, w);
            for (std::size_t p = 0; p < n_; ++p) {
                wx_[p * n_ + q] = gx[p];
                wy_[p * n_ + q] = gy[p];
            }
        }
    }

    /// +inf when no integer image is feasible.
    double solve() {
        best_ = std::numeric_limits<double>::infinity();
        best_x_.clear();
        std::vector<int> lo(n_, 0), hi(n_, 255);
        search(lo, hi);
        return best_;
    }

    std::vector<int> const& argmin() const { return best_x_; }
    long leaves() const { return leaves_; }

    bool feasible(std::vector<int> const& x) const {
        auto const f = sobel_definition(x, h_, w_);
        for (auto const& v : victims_) {
            auto const bits = template_definition(f, v.matrix);
            for (std::size_t k = 0; k < bits.size(); ++k)
                if (bits[k] != v.target[k]) return false;
        }
        return true;
    }

private:
    double distance_bound(std::vector<int> const& lo, std::vector<int> const& hi) const {
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            int const d = anchor_[i] < lo[i] ? lo[i] - anchor_[i] : (anchor_[i] > hi[i] ? anchor_[i] - hi[i] : 0);
            s += double(d) * d;
        }
        return s;
    }

    bool may_contain_feasible(std::vector<int> const& lo, std::vector<int> const& hi) const {
        std::vector<double> flo(n_), fhi(n_);
        for (std::size_t p = 0; p < n_; ++p) {
            double xl = 0, xh = 0, yl = 0, yh = 0;
            for (std::size_t q = 0; q < n_; ++q) {
                double const a = wx_[p * n_ + q], b = wy_[p * n_ + q];
                xl += a >= 0 ? a * lo[q] : a * hi[q];
                xh += a >= 0 ? a * hi[q] : a * lo[q];
                yl += b >= 0 ? b * lo[q] : b * hi[q];
                yh += b >= 0 ? b * hi[q] : b * lo[q];
            }
            double const cx = (xl <= 0 && xh >= 0) ? 0.0 : std::min(std::abs(xl), std::abs(xh));
            double const cy = (yl <= 0 && yh >= 0) ? 0.0 : std::min(std::abs(yl), std::abs(yh));
            double const fx = std::max(std::abs(xl), std::abs(xh)), fy = std::max(std::abs(yl), std::abs(yh));
            flo[p] = std::sqrt(cx * cx + cy * cy) * (1 - 1e-12);
            fhi[p] = std::sqrt(fx * fx + fy * fy) * (1 + 1e-12);
        }
        for (auto const& v : victims_)
            for (std::size_t k = 0; k < v.matrix.cols(); ++k) {
                double pl = 0.0, ph = 0.0;
                for (std::size_t i = 0; i < n_; ++i) {
                    double const m = v.matrix(i, k);
                    pl += m >= 0 ? m * flo[i] : m * fhi[i];
                    ph += m >= 0 ? m * fhi[i] : m * flo[i];
                }
                double const slack = 1e-9 * (1.0 + std::abs(pl) + std::abs(ph));
                if (v.target[k] == 0 && pl - slack >= 0.0) return false;
                if (v.target[k] == 1 && ph + slack < 0.0) return false;
            }
        return true;
    }

    void search(std::vector<int>& lo, std::vector<int>& hi) {
        double const bound = distance_bound(lo, hi);
        if (bound >= best_) return;
        std::size_t widest = 0;
        for (std::size_t i = 1; i < n_; ++i)
            if (hi[i] - lo[i] > hi[widest] - lo[widest]) widest = i;
        if (hi[widest] == lo[widest]) {
            ++leaves_;
            if (feasible(lo)) {
                best_ = bound;
                best_x_ = lo;
            }
            return;
        }
        if (!may_contain_feasible(lo, hi)) return;
        int const mid = lo[widest] + (hi[widest] - lo[widest]) / 2;
        int const save_lo = lo[widest], save_hi = hi[widest];
        bool const left_first = anchor_[widest] <= mid;
        for (int pass = 0; pass < 2; ++pass) {
            if ((pass == 0) == left_first) {
                lo[widest] = save_lo;
                hi[widest] = mid;
            } else {
                lo[widest] = mid + 1;
                hi[widest] = save_hi;
            }
            search(lo, hi);
        }
        lo[widest] = save_lo;
        hi[widest] = save_hi;
    }

    std::size_t h_, w_, n_;
    std::vector<int> anchor_;
    std::vector<Victim> victims_;
    std::vector<double> wx_, wy_;
    double best_ = 0.0;
    std::vector<int> best_x_;
    long leaves_ = 0;
};

}  // namespace oracle
