#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "urpattack/attack.hpp"
#include "urpattack/image.hpp"
#include "urpattack/pipeline.hpp"
#include "urpattack/prng.hpp"
#include "urpattack/qp.hpp"
#include "urpattack/solver.hpp"

namespace urp {

/// Linear maps from interior pixels to the two zero-padded gradient images,
/// obtained by convolving unit images (dense, n x n, row-major).
struct GradientOperator {
    std::size_t n = 0;
    std::vector<double> gx;
    std::vector<double> gy;
    // For each pixel q, the cells whose gradients depend on it.
    struct Tap {
        std::size_t cell;
        double wx;
        double wy;
    };
    std::vector<std::vector<Tap>> taps;

    static GradientOperator build(std::size_t height, std::size_t width) {
        GradientOperator op;
        op.n = height * width;
        op.gx.assign(op.n * op.n, 0.0);
        op.gy.assign(op.n * op.n, 0.0);
        op.taps.resize(op.n);
        for (std::size_t q = 0; q < op.n; ++q) {
            GrayImage unit(height, width);
            unit.set_flat(q, 1);
            PaddedImage const padded(unit);
            RealGrid const cx = convolve(kSobelG1, padded);
            RealGrid const cy = convolve(kSobelG2, padded);
            for (std::size_t p = 0; p < op.n; ++p) {
                op.gx[p * op.n + q] = cx.values[p];
                op.gy[p * op.n + q] = cy.values[p];
                if (cx.values[p] != 0.0 || cy.values[p] != 0.0)
                    op.taps[q].push_back({p, cx.values[p], cy.values[p]});
            }
        }
        return op;
    }

    double apply_x(std::size_t p, std::span<double const> u) const {
        double s = 0.0;
        for (std::size_t q = 0; q < n; ++q) s += gx[p * n + q] * u[q];
        return s;
    }
    double apply_y(std::size_t p, std::span<double const> u) const {
        double s = 0.0;
        for (std::size_t q = 0; q < n; ++q) s += gy[p * n + q] * u[q];
        return s;
    }
};

/// Continuous relaxation of an image-space attack program in normalized
/// units: u = X / 255 in [0,1]^n, v = Y / 255 >= 0.
///
///   objective     sum (u - u_A)^2
///   equalities    h_p = v_p^2 - gx_p(u)^2 - gy_p(u)^2          (merged kinds)
///                 h_p = (F_p/255)^2 - gx_p(u)^2 - gy_p(u)^2     (image phase)
///   inequalities  g_k = a_k . v - b_k <= 0                      (sign rows)
class Relaxation {
public:
    Relaxation(AttackProblem const& problem, GradientOperator const& op, double extra_margin)
        : op_(&op), n_(problem.pixel_count()), has_y_(problem.kind != ProblemKind::ImagePhase) {
        auto const& anchor = problem.anchor_image.value();
        anchor_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) anchor_[i] = anchor[i] / 255.0;
        if (!has_y_) {
            auto const& f = problem.feature_target.value();
            target_sq_.resize(n_);
            for (std::size_t i = 0; i < n_; ++i) target_sq_[i] = (f[i] / 255.0) * (f[i] / 255.0);
            return;
        }
        for (auto const& set : problem.constraint_sets) {
            for (std::size_t j = 0; j < set.matrix.cols(); ++j) {
                auto col = set.matrix.column(j);
                double const norm = set.matrix.column_norm(j);
                std::vector<double> row(col.begin(), col.end());
                strict_.push_back(set.target[j] == 0);
                if (set.target[j] == 0) {
                    rhs_.push_back(-problem.margin / 255.0 - extra_margin * norm);
                } else {
                    for (double& v : row) v = -v;
                    rhs_.push_back(-extra_margin * norm);
                }
                rows_.push_back(std::move(row));
            }
        }
    }

    std::size_t pixels() const noexcept { return n_; }
    std::size_t dimension() const noexcept { return has_y_ ? 2 * n_ : n_; }
    std::size_t equality_count() const noexcept { return n_; }
    std::size_t inequality_count() const noexcept { return rows_.size(); }
    bool has_magnitudes() const noexcept { return has_y_; }

    double lower(std::size_t) const noexcept { return 0.0; }
    double upper(std::size_t i) const noexcept { return i < n_ ? 1.0 : 6.0; }

    /// Point for a pixel image; magnitudes are set to their exact values.
    std::vector<double> lift(std::span<double const> u) const {
        std::vector<double> z(u.begin(), u.end());
        if (has_y_) {
            z.resize(2 * n_);
            for (std::size_t p = 0; p < n_; ++p) {
                double const a = op_->apply_x(p, u), b = op_->apply_y(p, u);
                z[n_ + p] = std::sqrt(a * a + b * b);
            }
        }
        return z;
    }

    double objective(std::span<double const> z) const {
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i) s += (z[i] - anchor_[i]) * (z[i] - anchor_[i]);
        return s;
    }

    void objective_gradient(std::span<double const> z, std::span<double> grad) const {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n_; ++i) grad[i] = 2.0 * (z[i] - anchor_[i]);
    }

    std::vector<double> equality_residuals(std::span<double const> z) const {
        std::vector<double> h(n_);
        for (std::size_t p = 0; p < n_; ++p) {
            double const a = op_->apply_x(p, z), b = op_->apply_y(p, z);
            double const lhs = has_y_ ? z[n_ + p] * z[n_ + p] : target_sq_[p];
            h[p] = lhs - a * a - b * b;
        }
        return h;
    }

    std::vector<double> inequality_residuals(std::span<double const> z) const {
        std::vector<double> g(rows_.size());
        for (std::size_t k = 0; k < rows_.size(); ++k) {
            double s = 0.0;
            for (std::size_t p = 0; p < n_; ++p) s += rows_[k][p] * z[n_ + p];
            g[k] = s - rhs_[k];
        }
        return g;
    }

    /// Gradient of equality p, dense over all variables.
    std::vector<double> equality_gradient(std::span<double const> z, std::size_t p) const {
        std::vector<double> grad(dimension(), 0.0);
        double const a = op_->apply_x(p, z), b = op_->apply_y(p, z);
        for (std::size_t q = 0; q < n_; ++q)
            grad[q] = -2.0 * a * op_->gx[p * n_ + q] - 2.0 * b * op_->gy[p * n_ + q];
        if (has_y_) grad[n_ + p] = 2.0 * z[n_ + p];
        return grad;
    }

    std::vector<double> inequality_gradient(std::size_t k) const {
        std::vector<double> grad(dimension(), 0.0);
        for (std::size_t p = 0; p < n_; ++p) grad[n_ + p] = rows_[k][p];
        return grad;
    }

    /// Powell-Hestenes-Rockafellar augmented Lagrangian and its gradient.
    double augmented_lagrangian(std::span<double const> z, std::span<double const> lambda,
                                std::span<double const> mu, double rho, std::span<double> grad) const {
        double value = objective(z);
        objective_gradient(z, grad);
        for (std::size_t p = 0; p < n_; ++p) {
            double const a = op_->apply_x(p, z), b = op_->apply_y(p, z);
            double const lhs = has_y_ ? z[n_ + p] * z[n_ + p] : target_sq_[p];
            double const h = lhs - a * a - b * b;
            value += lambda[p] * h + 0.5 * rho * h * h;
            double const c = lambda[p] + rho * h;
            if (c == 0.0) continue;
            for (std::size_t q = 0; q < n_; ++q)
                grad[q] += c * (-2.0 * a * op_->gx[p * n_ + q] - 2.0 * b * op_->gy[p * n_ + q]);
            if (has_y_) grad[n_ + p] += c * 2.0 * z[n_ + p];
        }
        for (std::size_t k = 0; k < rows_.size(); ++k) {
            double s = 0.0;
            for (std::size_t p = 0; p < n_; ++p) s += rows_[k][p] * z[n_ + p];
            double const g = s - rhs_[k];
            double const shifted = std::max(0.0, mu[k] + rho * g);
            value += (shifted * shifted - mu[k] * mu[k]) / (2.0 * rho);
            if (shifted == 0.0) continue;
            for (std::size_t p = 0; p < n_; ++p) grad[n_ + p] += shifted * rows_[k][p];
        }
        return value;
    }

    /// True when the magnitudes in z give every target bit its sign
    /// (strictly negative products for zero bits).
    bool signs_hold(std::span<double const> z) const {
        for (std::size_t k = 0; k < rows_.size(); ++k) {
            double s = 0.0;
            for (std::size_t p = 0; p < n_; ++p) s += rows_[k][p] * z[n_ + p];
            if (strict_[k] ? !(s < 0.0) : s > 0.0) return false;
        }
        return true;
    }

    double max_violation(std::span<double const> z) const {
        double v = 0.0;
        for (double h : equality_residuals(z)) v = std::max(v, std::abs(h));
        for (double g : inequality_residuals(z)) v = std::max(v, g);
        return v;
    }

private:
    GradientOperator const* op_;
    std::size_t n_;
    bool has_y_;
    std::vector<double> anchor_;
    std::vector<double> target_sq_;
    std::vector<std::vector<double>> rows_;
    std::vector<double> rhs_;
    std::vector<bool> strict_;
};

namespace detail {

struct InnerResult {
    double projected_gradient = 0.0;
    bool timed_out = false;
};

// Spectral projected gradient with a non-monotone Armijo search over a box.
template <class Fn>
InnerResult spectral_projected_gradient(Fn&& value_grad, std::vector<double>& z, std::vector<double> const& lo,
                                        std::vector<double> const& hi, int max_iter, double tol,
                                        Deadline const& deadline) {
    std::size_t const dim = z.size();
    auto project_box = [&](std::vector<double>& x) {
        for (std::size_t i = 0; i < dim; ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
    };
    std::vector<double> g(dim), g_new(dim), trial(dim), d(dim);
    double f = value_grad(z, g);
    std::array<double, 10> history;
    history.fill(f);
    std::size_t hpos = 0;
    auto pg_norm = [&]() {
        double r = 0.0;
        for (std::size_t i = 0; i < dim; ++i) r = std::max(r, std::abs(std::clamp(z[i] - g[i], lo[i], hi[i]) - z[i]));
        return r;
    };
    double pg = pg_norm();
    double alpha = pg > 0.0 ? std::min(1e10, 1.0 / pg) : 1.0;
    InnerResult out;
    for (int it = 0; it < max_iter && pg > tol; ++it) {
        if ((it & 31) == 0 && deadline.expired()) {
            out.timed_out = true;
            break;
        }
        for (std::size_t i = 0; i < dim; ++i) d[i] = z[i] - alpha * g[i];
        project_box(d);
        double gd = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            d[i] -= z[i];
            gd += g[i] * d[i];
        }
        double const f_ref = *std::max_element(history.begin(), history.end());
        double step = 1.0, f_new = f;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t i = 0; i < dim; ++i) trial[i] = z[i] + step * d[i];
            f_new = value_grad(trial, g_new);
            if (f_new <= f_ref + 1e-4 * step * gd) {
                accepted = true;
                break;
            }
            double const denom = 2.0 * (f_new - f - step * gd);
            double next = denom > 0.0 ? -gd * step * step / denom : 0.5 * step;
            step = std::clamp(next, 0.1 * step, 0.5 * step);
        }
        if (!accepted) break;
        double sy = 0.0, ss = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            double const s = trial[i] - z[i], y = g_new[i] - g[i];
            sy += s * y;
            ss += s * s;
        }
        alpha = sy > 0.0 ? std::clamp(ss / sy, 1e-12, 1e10) : 1e10;
        z.swap(trial);
        g.swap(g_new);
        f = f_new;
        history[hpos++ % history.size()] = f;
        pg = pg_norm();
    }
    out.projected_gradient = pg;
    return out;
}

struct RelaxationOutcome {
    std::vector<double> pixels;  // normalized
    double violation = 0.0;
    bool converged = false;
    bool timed_out = false;
};

inline RelaxationOutcome solve_relaxation(Relaxation const& model, std::vector<double> start, SolverConfig const& cfg,
                                          Deadline const& deadline) {
    std::size_t const dim = model.dimension();
    std::vector<double> lo(dim), hi(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        lo[i] = model.lower(i);
        hi[i] = model.upper(i);
    }
    std::vector<double> z = model.lift(std::span<double const>(start).first(model.pixels()));
    std::vector<double> lambda(model.equality_count(), 0.0), mu(model.inequality_count(), 0.0);
    double rho = 10.0;
    double prev_violation = std::numeric_limits<double>::infinity();
    RelaxationOutcome out;
    // Signs checked on magnitudes recomputed from the real-valued pixels, so a
    // small equality residual cannot stand in for an unreachable sign.
    auto real_image_ok = [&] {
        return !model.has_magnitudes() ||
               model.signs_hold(model.lift(std::span<double const>(z).first(model.pixels())));
    };
    for (int outer = 0; outer < cfg.max_outer_iterations; ++outer) {
        double const inner_tol = std::max(1e-9, 1e-3 / double(1 << std::min(outer, 20)));
        auto fn = [&](std::vector<double> const& x, std::vector<double>& grad) {
            return model.augmented_lagrangian(x, lambda, mu, rho, grad);
        };
        auto const inner = spectral_projected_gradient(fn, z, lo, hi, cfg.inner_iterations, inner_tol, deadline);
        auto const h = model.equality_residuals(z);
        auto const g = model.inequality_residuals(z);
        double violation = 0.0;
        for (std::size_t p = 0; p < h.size(); ++p) {
            violation = std::max(violation, std::abs(h[p]));
            lambda[p] += rho * h[p];
        }
        for (std::size_t k = 0; k < g.size(); ++k) {
            violation = std::max(violation, g[k]);
            mu[k] = std::max(0.0, mu[k] + rho * g[k]);
        }
        out.violation = violation;
        if (inner.timed_out) {
            out.timed_out = true;
            break;
        }
        if (violation <= cfg.feasibility_tol && inner.projected_gradient <= 1e-6 && real_image_ok()) {
            out.converged = true;
            break;
        }
        if (violation > 0.25 * prev_violation) rho = std::min(rho * cfg.penalty_growth, 1e10);
        prev_violation = violation;
    }
    if (!out.converged && out.violation <= 10.0 * cfg.feasibility_tol && real_image_ok()) out.converged = true;
    out.pixels.assign(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(model.pixels()));
    return out;
}

/// Integer image with incrementally maintained gradients, magnitudes and
/// projections. Scores are (violation, objective); violation is the sum of
/// sign-constraint hinge losses in units of the column norm (or, for an image
/// phase without a template, the summed squared-magnitude mismatch).
class IntegerState {
public:
    IntegerState(AttackProblem const& problem, GradientOperator const& op, std::vector<int> pixels)
        : problem_(&problem), op_(&op), pixels_(std::move(pixels)) {
        auto const& anchor = problem.anchor_image.value();
        anchor_.assign(anchor.pixels().begin(), anchor.pixels().end());
        for (auto const& set : problem.constraint_sets) {
            std::vector<double> norms(set.matrix.cols());
            for (std::size_t j = 0; j < norms.size(); ++j) norms[j] = set.matrix.column_norm(j);
            col_norms_.push_back(std::move(norms));
        }
        if (problem.kind == ProblemKind::ImagePhase) {
            auto const& f = problem.feature_target.value();
            for (std::size_t p = 0; p < f.size(); ++p) target_sq_.push_back(f[p] * f[p]);
        }
        recompute();
    }

    std::vector<int> const& pixels() const noexcept { return pixels_; }
    double violation() const noexcept { return violation_; }
    double objective() const noexcept { return objective_; }
    bool certified() const noexcept { return certified_; }

    GrayImage image() const { return GrayImage(problem_->height, problem_->width, pixels_); }

    struct Trial {
        double violation;
        double objective;
        bool feasible;  // approximate; confirm with apply()
    };

    /// Score of the image with pixel q shifted by delta (must stay in range).
    Trial evaluate_move(std::size_t q, int delta) const {
        return evaluate_moves({{q, delta}});
    }

    Trial evaluate_moves(std::initializer_list<std::pair<std::size_t, int>> moves) const {
        // Changed magnitudes, accumulated per cell.
        scratch_cells_.clear();
        double obj = objective_;
        for (auto [q, delta] : moves) {
            double const old_d = pixels_[q] - double(anchor_[q]);
            double const new_d = old_d + delta;
            obj += new_d * new_d - old_d * old_d;
            for (auto const& tap : op_->taps[q]) {
                auto it = std::find_if(scratch_cells_.begin(), scratch_cells_.end(),
                                       [&](auto const& c) { return c.cell == tap.cell; });
                if (it == scratch_cells_.end()) {
                    scratch_cells_.push_back({tap.cell, gx_[tap.cell], gy_[tap.cell]});
                    it = scratch_cells_.end() - 1;
                }
                it->gx += tap.wx * delta;
                it->gy += tap.wy * delta;
            }
        }
        return score_with(scratch_cells_, obj);
    }

    void apply(std::size_t q, int delta) {
        pixels_[q] += delta;
        recompute();
    }

    void assign(std::vector<int> pixels) {
        pixels_ = std::move(pixels);
        recompute();
    }

private:
    struct CellChange {
        std::size_t cell;
        double gx;
        double gy;
    };

    Trial score_with(std::vector<CellChange> const& changes, double obj) const {
        bool const image_phase = problem_->kind == ProblemKind::ImagePhase && problem_->constraint_sets.empty();
        if (image_phase) {
            double v = residual_sum_;
            for (auto const& c : changes) {
                double const old_r = std::abs(feat_[c.cell] * feat_[c.cell] - target_sq_[c.cell]);
                double const new_r = std::abs(c.gx * c.gx + c.gy * c.gy - target_sq_[c.cell]);
                v += (new_r - old_r) / (255.0 * 255.0);
            }
            return {std::max(0.0, v), obj, v <= 1e-12};
        }
        double v = 0.0;
        bool feasible = true;
        std::size_t accepted_members = 0;
        for (std::size_t s = 0; s < problem_->constraint_sets.size(); ++s) {
            auto const& set = problem_->constraint_sets[s];
            auto const& proj = proj_[s];
            mismatch_scratch_.assign(problem_->members.size(), 0);
            for (std::size_t j = 0; j < proj.size(); ++j) {
                double pj = proj[j];
                auto col = set.matrix.column(j);
                for (auto const& c : changes) pj += (std::sqrt(c.gx * c.gx + c.gy * c.gy) - feat_[c.cell]) * col[c.cell];
                double const hinge = set.target[j] == 0 ? std::max(0.0, pj + problem_->margin)
                                                        : std::max(0.0, -pj);
                v += hinge / col_norms_[s][j];
                if (problem_->kind == ProblemKind::MultiAuth) {
                    int const bit = pj < 0.0 ? 0 : 1;
                    for (std::size_t k = 0; k < problem_->members.size(); ++k)
                        mismatch_scratch_[k] += bit != problem_->members[k][j];
                } else if (hinge > 0.0) {
                    feasible = false;
                }
            }
            if (problem_->kind == ProblemKind::MultiAuth) {
                for (std::size_t k = 0; k < problem_->members.size(); ++k)
                    accepted_members += mismatch_scratch_[k] <= problem_->epsilon;
                feasible = accepted_members == problem_->members.size();
            }
        }
        return {v, obj, feasible};
    }

    void recompute() {
        std::size_t const n = pixels_.size();
        GrayImage const img(problem_->height, problem_->width, pixels_);
        PaddedImage const padded(img);
        RealGrid const cx = convolve(kSobelG1, padded);
        RealGrid const cy = convolve(kSobelG2, padded);
        gx_ = cx.values;
        gy_ = cy.values;
        feat_.resize(n);
        for (std::size_t p = 0; p < n; ++p) feat_[p] = std::sqrt(gx_[p] * gx_[p] + gy_[p] * gy_[p]);
        objective_ = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double const d = pixels_[i] - double(anchor_[i]);
            objective_ += d * d;
        }
        proj_.clear();
        for (auto const& set : problem_->constraint_sets) proj_.push_back(project(feat_, set.matrix));
        residual_sum_ = 0.0;
        if (!target_sq_.empty())
            for (std::size_t p = 0; p < n; ++p)
                residual_sum_ += std::abs(feat_[p] * feat_[p] - target_sq_[p]) / (255.0 * 255.0);
        auto const t = score_with({}, objective_);
        violation_ = t.violation;
        // Exact re-check using the same arithmetic as enrollment.
        if (problem_->kind == ProblemKind::ImagePhase && problem_->constraint_sets.empty()) {
            certified_ = all_true(certify(img, *problem_));
        } else if (problem_->kind == ProblemKind::MultiAuth) {
            Template const got = binarize(proj_.front());
            certified_ = true;
            for (auto const& mbr : problem_->members)
                certified_ = certified_ && verify(got, mbr, problem_->epsilon).accepted;
        } else {
            certified_ = true;
            for (std::size_t s = 0; s < proj_.size(); ++s)
                certified_ = certified_ && binarize(proj_[s]) == problem_->constraint_sets[s].target;
        }
    }

    AttackProblem const* problem_;
    GradientOperator const* op_;
    std::vector<int> pixels_;
    std::vector<int> anchor_;
    std::vector<std::vector<double>> col_norms_;
    std::vector<double> target_sq_;
    std::vector<double> gx_, gy_, feat_;
    std::vector<std::vector<double>> proj_;
    double objective_ = 0.0;
    double violation_ = 0.0;
    double residual_sum_ = 0.0;
    bool certified_ = false;
    mutable std::vector<CellChange> scratch_cells_;
    mutable std::vector<std::size_t> mismatch_scratch_;
};

inline bool lex_less(double v1, double o1, double v2, double o2) {
    return v1 < v2 || (v1 == v2 && o1 < o2);
}

/// Greedy best-improvement hill climb over single-pixel moves of +-1..+-8.
/// Accepts a move only if it lowers the violation, or keeps it and lowers the
/// objective. Returns true once the exact forward check passes.
inline bool repair(IntegerState& state, int budget, Deadline const& deadline) {
    std::size_t const n = state.pixels().size();
    for (int moves = 0; moves <= budget; ++moves) {
        if (state.certified()) return true;
        if (moves == budget || deadline.expired()) return false;
        double best_v = state.violation(), best_o = state.objective();
        std::size_t best_q = n;
        int best_d = 0;
        for (std::size_t q = 0; q < n; ++q) {
            for (int d = -8; d <= 8; ++d) {
                if (d == 0) continue;
                int const val = state.pixels()[q] + d;
                if (val < 0 || val > 255) continue;
                auto const t = state.evaluate_move(q, d);
                if (lex_less(t.violation, t.objective, best_v, best_o)) {
                    best_v = t.violation;
                    best_o = t.objective;
                    best_q = q;
                    best_d = d;
                }
            }
        }
        if (best_q == n) return false;
        double const before_v = state.violation(), before_o = state.objective();
        state.apply(best_q, best_d);
        if (!lex_less(state.violation(), state.objective(), before_v, before_o) && !state.certified()) {
            state.apply(best_q, -best_d);  // incremental estimate was off; stop here
            return state.certified();
        }
    }
    return state.certified();
}

/// Objective descent that keeps the image certified: single-pixel steps
/// towards the anchor and paired +-1 steps.
inline void polish(IntegerState& state, std::vector<int> const& anchor, Deadline const& deadline) {
    std::size_t const n = state.pixels().size();
    for (bool improved = true; improved && !deadline.expired();) {
        improved = false;
        double best_o = state.objective();
        std::vector<std::pair<std::size_t, int>> best;
        for (std::size_t q = 0; q < n; ++q) {
            int const gap = anchor[q] - state.pixels()[q];
            if (gap == 0) continue;
            int const dir = gap > 0 ? 1 : -1;
            for (int step = 1; step <= std::min(8, std::abs(gap)); ++step) {
                auto const t = state.evaluate_move(q, dir * step);
                if (t.feasible && t.objective < best_o) {
                    best_o = t.objective;
                    best = {{q, dir * step}};
                }
            }
        }
        for (std::size_t q = 0; q < n; ++q) {
            for (std::size_t r = q + 1; r < n; ++r) {
                for (int dq : {-1, 1}) {
                    for (int dr : {-1, 1}) {
                        int const vq = state.pixels()[q] + dq, vr = state.pixels()[r] + dr;
                        if (vq < 0 || vq > 255 || vr < 0 || vr > 255) continue;
                        auto const t = state.evaluate_moves({{q, dq}, {r, dr}});
                        if (t.feasible && t.objective < best_o) {
                            best_o = t.objective;
                            best = {{q, dq}, {r, dr}};
                        }
                    }
                }
            }
        }
        if (best.empty()) break;
        std::vector<int> const before = state.pixels();
        std::vector<int> next = before;
        for (auto [q, d] : best) next[q] += d;
        state.assign(std::move(next));
        if (state.certified()) {
            improved = true;
        } else {
            state.assign(before);
        }
    }
}

/// Exhaustive scan of the integer box of half-width R around the incumbent,
/// with R the largest radius whose box holds at most `max_points` images.
/// Moves to the best certified point found and repeats until no gain.
inline void neighborhood_search(IntegerState& state, std::vector<int> const& anchor, double max_points,
                                Deadline const& deadline) {
    std::size_t const n = state.pixels().size();
    int radius = 0;
    while (std::pow(2.0 * (radius + 1) + 1.0, double(n)) <= max_points) ++radius;
    if (radius == 0 || !state.certified()) return;
    for (bool improved = true; improved && !deadline.expired();) {
        improved = false;
        std::vector<int> const center = state.pixels();
        std::vector<int> best = center;
        double best_o = state.objective();
        std::vector<int> offset(n, -radius), cand(n);
        for (bool more = true; more;) {
            double obj = 0.0;
            bool in_range = true;
            for (std::size_t i = 0; i < n; ++i) {
                cand[i] = center[i] + offset[i];
                in_range = in_range && cand[i] >= 0 && cand[i] <= 255;
                double const d = cand[i] - double(anchor[i]);
                obj += d * d;
            }
            if (in_range && obj < best_o) {
                state.assign(cand);
                if (state.certified()) {
                    best_o = obj;
                    best = cand;
                }
            }
            more = false;
            for (std::size_t i = 0; i < n; ++i) {
                if (offset[i] < radius) {
                    ++offset[i];
                    more = true;
                    break;
                }
                offset[i] = -radius;
            }
            if (deadline.expired()) break;
        }
        improved = best != center;
        state.assign(best);
    }
}

inline std::vector<int> round_pixels(std::vector<double> const& u) {
    std::vector<int> out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        out[i] = static_cast<int>(std::lround(std::clamp(u[i], 0.0, 1.0) * 255.0));
    return out;
}

}  // namespace detail

/// Non-convex image-space programs: augmented-Lagrangian relaxation, rounding,
/// violation-first hill-climb repair, certification-preserving polish and
/// perturbed restarts. Only images that re-enroll to every target are
/// reported as certified.
inline SolveReport solve_qcqp(AttackProblem const& problem, SolverConfig const& config = {}) {
    if (!problem.is_image_kind()) throw std::invalid_argument("solve_qcqp: expects an image-space problem");
    config.validate();
    detail::Deadline const deadline(config.time_limit);
    auto const& anchor = problem.anchor_image.value();
    std::vector<int> const anchor_px = anchor.to_ints();
    std::size_t const n = anchor.size();

    SolveReport report;
    auto finish = [&](std::optional<std::vector<int>> pixels, SolveStatus status, std::string note) {
        GrayImage img = pixels ? GrayImage(problem.height, problem.width, *pixels) : anchor;
        report.objective = squared_distance(img, anchor);
        report.euclidean_distance = std::sqrt(report.objective);
        report.certification = certify(img, problem);
        if (is_certified(status) && !all_true(report.certification)) status = SolveStatus::ContinuousOnly;
        report.status = status;
        report.image = std::move(img);
        report.note = std::move(note);
        report.wall_time = deadline.elapsed();
        return report;
    };

    if (problem.kind == ProblemKind::ImagePhase) {
        for (double f : problem.feature_target->values())
            if (f > kMaxSobelMagnitude)
                return finish(std::nullopt, SolveStatus::Infeasible, "feature target exceeds the attainable magnitude");
    }

    GradientOperator const op = GradientOperator::build(problem.height, problem.width);
    detail::IntegerState state(problem, op, anchor_px);
    if (state.certified()) return finish(anchor_px, SolveStatus::CertifiedOptimal, "anchor already certified");

    SplitMix64 rng(config.rng_seed ^ 0x5DEECE66Dull);
    static constexpr double kMargins[] = {0.004, 0.015, 0.04, 0.0};
    std::optional<std::vector<int>> best;
    double best_obj = std::numeric_limits<double>::infinity();
    bool any_converged = false;
    int extra_after_first = 0;
    bool timed_out = false;

    for (int r = 0; r < config.restarts; ++r) {
        if (deadline.expired()) {
            timed_out = true;
            break;
        }
        report.restarts_used = r + 1;
        std::vector<double> start(n);
        double const sigma = r == 0 ? 0.0 : std::min(0.5, 0.04 * r);
        for (std::size_t i = 0; i < n; ++i)
            start[i] = std::clamp(anchor_px[i] / 255.0 + sigma * rng.normal(), 0.0, 1.0);
        double const margin = kMargins[r % std::size(kMargins)];

        Relaxation const model(problem, op, margin);
        auto const relaxed = detail::solve_relaxation(model, start, config, deadline);
        any_converged = any_converged || relaxed.converged;
        if (relaxed.timed_out) {
            timed_out = true;
            break;
        }

        state.assign(detail::round_pixels(relaxed.pixels));
        if (!detail::repair(state, config.repair_budget, deadline)) {
            // Second chance from the anchor side of the relaxed point.
            if (deadline.expired()) {
                timed_out = true;
                break;
            }
            continue;
        }
        detail::polish(state, anchor_px, deadline);
        if (config.exact_polish_points > 0.0)
            detail::neighborhood_search(state, anchor_px, config.exact_polish_points, deadline);
        if (state.objective() < best_obj) {
            best_obj = state.objective();
            best = state.pixels();
        }
        if (++extra_after_first > config.improve_restarts) break;
    }

    if (best) return finish(best, SolveStatus::CertifiedFeasible, "certified by forward enrollment");
    if (timed_out) return finish(std::nullopt, SolveStatus::TimedOut, "time limit reached before certification");
    if (any_converged)
        return finish(std::nullopt, SolveStatus::ContinuousOnly,
                      "relaxation converged but integer repair did not certify");
    return finish(std::nullopt, SolveStatus::Infeasible,
                  "presumed infeasible: relaxation violation stalled above tolerance in every restart (not a proof)");
}

/// Dispatches on the problem kind.
inline SolveReport solve(AttackProblem const& problem, SolverConfig const& config = {}) {
    return problem.kind == ProblemKind::FeaturePhase ? solve_qp(problem, config) : solve_qcqp(problem, config);
}

}  // namespace urp
