#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "urpattack/attack.hpp"
#include "urpattack/solver.hpp"

namespace urp {

namespace detail {

/// Rows a_k . x <= b_k of a feature-phase problem. Bit-1 rows are tightened
/// by `inner_margin` times the column norm so the returned point keeps a
/// strictly non-negative product after round-off.
struct LinearSystem {
    std::size_t n = 0;
    std::vector<std::vector<double>> rows;
    std::vector<double> rhs;
};

inline LinearSystem feature_phase_rows(AttackProblem const& p, double inner_margin) {
    auto const& set = p.constraint_sets.front();
    LinearSystem sys;
    sys.n = set.matrix.rows();
    for (std::size_t j = 0; j < set.matrix.cols(); ++j) {
        auto col = set.matrix.column(j);
        double const norm = set.matrix.column_norm(j);
        std::vector<double> row(col.begin(), col.end());
        if (set.target[j] == 0) {
            sys.rhs.push_back(-p.margin - inner_margin * norm);
        } else {
            for (double& v : row) v = -v;
            sys.rhs.push_back(-inner_margin * norm);
        }
        sys.rows.push_back(std::move(row));
    }
    return sys;
}

// Largest eigenvalue of A A^T by power iteration, padded upwards.
inline double spectral_bound(LinearSystem const& sys) {
    std::size_t const k = sys.rows.size();
    std::vector<double> v(k, 1.0), w(k), t(sys.n);
    double lambda = 0.0;
    for (int it = 0; it < 100; ++it) {
        std::fill(t.begin(), t.end(), 0.0);
        for (std::size_t r = 0; r < k; ++r)
            for (std::size_t i = 0; i < sys.n; ++i) t[i] += sys.rows[r][i] * v[r];
        for (std::size_t r = 0; r < k; ++r) w[r] = std::inner_product(t.begin(), t.end(), sys.rows[r].begin(), 0.0);
        double const norm = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
        if (norm == 0.0) return 1.0;
        lambda = norm / std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        for (std::size_t r = 0; r < k; ++r) v[r] = w[r] / norm;
    }
    return 1.2 * lambda + 1e-12;
}

}  // namespace detail

/// Nearest non-negative feature vector satisfying the sign constraints, by
/// accelerated projected gradient ascent on the dual (x(l) = max(0, F_A - A^T l)).
inline SolveReport solve_qp(AttackProblem const& problem, SolverConfig const& config = {}) {
    if (problem.kind != ProblemKind::FeaturePhase) throw std::invalid_argument("solve_qp: expects a feature-phase problem");
    config.validate();
    detail::Deadline const deadline(config.time_limit);
    auto const& anchor = problem.anchor_feature.value();
    auto const sys = detail::feature_phase_rows(problem, config.feasibility_tol);
    std::size_t const n = sys.n, k = sys.rows.size();
    std::vector<double> const a(anchor.values().begin(), anchor.values().end());

    SolveReport report;
    auto finish = [&](std::vector<double> x, SolveStatus status, std::string note) {
        for (double& v : x) v = std::max(v, 0.0);
        FeatureVector fv(std::move(x));
        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i) obj += (fv[i] - a[i]) * (fv[i] - a[i]);
        report.objective = obj;
        report.euclidean_distance = std::sqrt(obj);
        report.certification = certify_feature(fv, problem);
        if (status == SolveStatus::CertifiedFeasible && !all_true(report.certification))
            status = SolveStatus::ContinuousOnly;
        report.status = status;
        report.feature = std::move(fv);
        report.note = std::move(note);
        report.wall_time = deadline.elapsed();
        return report;
    };

    auto residuals = [&](std::vector<double> const& x) {
        std::vector<double> r(k);
        for (std::size_t q = 0; q < k; ++q)
            r[q] = std::inner_product(x.begin(), x.end(), sys.rows[q].begin(), 0.0) - sys.rhs[q];
        return r;
    };

    // Anchor already satisfies the strict constraints of the problem itself.
    {
        auto const& set = problem.constraint_sets.front();
        auto const proj = project(anchor, set.matrix);
        bool ok = true;
        for (std::size_t j = 0; j < proj.size(); ++j)
            ok = ok && (set.target[j] == 0 ? proj[j] <= -problem.margin : proj[j] >= 0.0);
        if (ok) return finish(a, SolveStatus::CertifiedFeasible, "anchor feasible");
    }

    double const lip = detail::spectral_bound(sys);
    double const step = 1.0 / lip;
    double const kkt_tol = 1e-2 * config.feasibility_tol;
    std::vector<double> lambda(k, 0.0), y(k, 0.0), prev(k, 0.0), x(n), grad(k);
    auto primal = [&](std::vector<double> const& l) {
        std::vector<double> out(a);
        for (std::size_t q = 0; q < k; ++q)
            if (l[q] != 0.0)
                for (std::size_t i = 0; i < n; ++i) out[i] -= sys.rows[q][i] * l[q];
        for (double& v : out) v = std::max(v, 0.0);
        return out;
    };
    auto dual_value = [&](std::vector<double> const& l, std::vector<double> const& xl) {
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) v += 0.5 * (xl[i] - a[i]) * (xl[i] - a[i]);
        auto const r = residuals(xl);
        for (std::size_t q = 0; q < k; ++q) v += l[q] * r[q];
        return v;
    };

    double t = 1.0;
    double q_prev = -INFINITY;
    long const max_iter = 2'000'000;
    for (long it = 0; it < max_iter; ++it) {
        if ((it & 255) == 0 && deadline.expired())
            return finish(primal(lambda), SolveStatus::TimedOut, "time limit reached");
        x = primal(y);
        grad = residuals(x);
        prev = lambda;
        for (std::size_t q = 0; q < k; ++q) lambda[q] = std::max(0.0, y[q] + step * grad[q]);
        auto const xl = primal(lambda);
        double const qv = dual_value(lambda, xl);
        double const t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        if (qv < q_prev) {
            t = 1.0;  // adaptive restart
            y = lambda;
        } else {
            for (std::size_t q = 0; q < k; ++q) y[q] = lambda[q] + ((t - 1.0) / t_next) * (lambda[q] - prev[q]);
            t = t_next;
        }
        q_prev = qv;

        auto const r = residuals(xl);
        double kkt = 0.0;
        for (std::size_t q = 0; q < k; ++q) kkt = std::max(kkt, std::abs(std::min(lambda[q], -r[q])));
        if (kkt <= kkt_tol) return finish(xl, SolveStatus::CertifiedFeasible, "KKT residual below tolerance");

        if ((it % 1000) == 999) {
            double const l1 = std::accumulate(lambda.begin(), lambda.end(), 0.0);
            if (l1 > 0.0) {
                // Farkas: y >= 0, A^T y >= 0 and b^T y < 0 proves emptiness for x >= 0.
                double min_aty = INFINITY, bty = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    double s = 0.0;
                    for (std::size_t q = 0; q < k; ++q) s += sys.rows[q][i] * lambda[q] / l1;
                    min_aty = std::min(min_aty, s);
                }
                for (std::size_t q = 0; q < k; ++q) bty += sys.rhs[q] * lambda[q] / l1;
                if (min_aty >= -1e-12 && bty < 0.0)
                    return finish(xl, SolveStatus::Infeasible, "Farkas certificate found");
            }
        }
    }
    return finish(primal(lambda), SolveStatus::Infeasible, "no progress below tolerance");
}

}  // namespace urp
