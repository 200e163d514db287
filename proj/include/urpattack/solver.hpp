#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "urpattack/attack.hpp"
#include "urpattack/image.hpp"
#include "urpattack/pipeline.hpp"

namespace urp {

struct SolverConfig {
    double time_limit = 150.0;         // seconds, wall clock
    int max_outer_iterations = 60;     // augmented-Lagrangian updates
    double penalty_growth = 10.0;
    double feasibility_tol = 1e-7;
    int repair_budget = 4000;          // accepted hill-climb moves per restart
    std::uint64_t rng_seed = 0;
    int restarts = 40;
    int improve_restarts = 4;          // extra restarts after the first certified image
    int inner_iterations = 600;        // projected-gradient steps per outer iteration
    // Exhaustive integer box search around each certified image, with the
    // widest box holding at most this many points (0 disables).
    double exact_polish_points = 20000.0;

    void validate() const {
        if (!(time_limit > 0.0)) throw std::invalid_argument("time_limit must be positive");
        if (!(penalty_growth > 1.0)) throw std::invalid_argument("penalty_growth must exceed 1");
        if (!(feasibility_tol > 0.0)) throw std::invalid_argument("feasibility_tol must be positive");
        if (max_outer_iterations < 1 || restarts < 1 || repair_budget < 0 || inner_iterations < 1)
            throw std::invalid_argument("iteration budgets must be positive");
    }
};

enum class SolveStatus { CertifiedOptimal, CertifiedFeasible, ContinuousOnly, Infeasible, TimedOut };

inline char const* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::CertifiedOptimal: return "CertifiedOptimal";
        case SolveStatus::CertifiedFeasible: return "CertifiedFeasible";
        case SolveStatus::ContinuousOnly: return "ContinuousOnly";
        case SolveStatus::Infeasible: return "Infeasible";
        case SolveStatus::TimedOut: return "TimedOut";
    }
    return "?";
}

inline bool is_certified(SolveStatus s) {
    return s == SolveStatus::CertifiedOptimal || s == SolveStatus::CertifiedFeasible;
}

using CertificationMap = std::vector<std::pair<std::string, bool>>;

inline bool all_true(CertificationMap const& m) {
    for (auto const& [k, v] : m)
        if (!v) return false;
    return !m.empty();
}

struct SolveReport {
    SolveStatus status = SolveStatus::Infeasible;
    std::optional<GrayImage> image;
    std::optional<FeatureVector> feature;
    double objective = 0.0;           // squared distance to the anchor
    double euclidean_distance = 0.0;  // sqrt(objective)
    double wall_time = 0.0;
    CertificationMap certification;
    std::string note;
    int restarts_used = 0;
};

namespace detail {

class Deadline {
public:
    explicit Deadline(double seconds)
        : start_(std::chrono::steady_clock::now()),
          end_(start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                            std::chrono::duration<double>(seconds))) {}

    bool expired() const { return std::chrono::steady_clock::now() >= end_; }
    double elapsed() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
    std::chrono::steady_clock::time_point end_;
};

inline std::string set_label(SignConstraintSet const& s, std::size_t k) {
    return s.password ? *s.password : "victim_" + std::to_string(k);
}

}  // namespace detail

/// Exact forward check of a candidate image against every victim of `problem`.
/// Sets that carry a password are re-enrolled from the password; the others
/// use the stored matrix. Multi-authentication problems report verifier
/// acceptance per member instead of template equality.
inline CertificationMap certify(GrayImage const& candidate, AttackProblem const& problem) {
    if (candidate.height() != problem.height || candidate.width() != problem.width)
        throw DimensionError("candidate image shape does not match the problem");
    CertificationMap out;
    if (problem.kind == ProblemKind::FeaturePhase)
        throw std::invalid_argument("certify: feature-phase problems are certified on feature vectors");
    if (problem.kind == ProblemKind::MultiAuth) {
        auto const& set = problem.constraint_sets.front();
        Template const got = set.password ? enroll(candidate, *set.password, set.target.size(), set.orthonormalized)
                                          : set.evaluate(candidate);
        for (std::size_t k = 0; k < problem.members.size(); ++k)
            out.emplace_back("member_" + std::to_string(k), verify(got, problem.members[k], problem.epsilon).accepted);
        return out;
    }
    if (problem.kind == ProblemKind::ImagePhase && problem.constraint_sets.empty()) {
        FeatureVector const f = sobel(candidate);
        bool ok = true;
        for (std::size_t i = 0; i < f.size(); ++i)
            ok = ok && std::abs(f[i] - (*problem.feature_target)[i]) <= 1e-9 * (1.0 + (*problem.feature_target)[i]);
        out.emplace_back("feature", ok);
        return out;
    }
    for (std::size_t k = 0; k < problem.constraint_sets.size(); ++k) {
        auto const& set = problem.constraint_sets[k];
        Template const got = set.password ? enroll(candidate, *set.password, set.target.size(), set.orthonormalized)
                                          : set.evaluate(candidate);
        out.emplace_back(detail::set_label(set, k), got == set.target);
    }
    return out;
}

/// Feature-phase certification: the feature vector binarizes to the target.
inline CertificationMap certify_feature(FeatureVector const& candidate, AttackProblem const& problem) {
    if (problem.kind != ProblemKind::FeaturePhase) throw std::invalid_argument("certify_feature: wrong problem kind");
    auto const& set = problem.constraint_sets.front();
    return {{detail::set_label(set, 0), binarize(project(candidate, set.matrix)) == set.target}};
}

}  // namespace urp
