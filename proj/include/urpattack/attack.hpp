#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "urpattack/image.hpp"
#include "urpattack/pipeline.hpp"
#include "urpattack/prng.hpp"

namespace urp {

enum class ProblemKind { FeaturePhase, ImagePhase, Merged, MultiAuth, MultiCollision };

inline char const* to_string(ProblemKind k) {
    switch (k) {
        case ProblemKind::FeaturePhase: return "FeaturePhase";
        case ProblemKind::ImagePhase: return "ImagePhase";
        case ProblemKind::Merged: return "Merged";
        case ProblemKind::MultiAuth: return "MultiAuth";
        case ProblemKind::MultiCollision: return "MultiCollision";
    }
    return "?";
}

inline ProblemKind problem_kind_from_string(std::string const& s) {
    for (auto k : {ProblemKind::FeaturePhase, ProblemKind::ImagePhase, ProblemKind::Merged,
                   ProblemKind::MultiAuth, ProblemKind::MultiCollision})
        if (s == to_string(k)) return k;
    throw ParseError("unknown problem kind '" + s + "'");
}

/// Sign requirements one victim places on the projected feature vector.
/// Bit 0 at index i means column i must give a negative product (zero_indices),
/// bit 1 means non-negative (one_indices).
struct SignConstraintSet {
    ProjectionMatrix matrix;
    Template target;
    std::optional<std::string> password;
    bool orthonormalized = false;
    std::vector<std::size_t> zero_indices;
    std::vector<std::size_t> one_indices;

    static SignConstraintSet make(ProjectionMatrix matrix, Template target,
                                  std::optional<std::string> password = std::nullopt,
                                  bool orthonormalized = false) {
        if (matrix.cols() != target.size())
            throw DimensionError("template length does not match matrix column count");
        SignConstraintSet s{std::move(matrix), std::move(target), std::move(password), orthonormalized, {}, {}};
        for (std::size_t i = 0; i < s.target.size(); ++i)
            (s.target[i] == 0 ? s.zero_indices : s.one_indices).push_back(i);
        return s;
    }

    static SignConstraintSet from_password(std::string const& password, Template target, std::size_t n,
                                           bool orthonormalize = false) {
        auto m = derive_matrix(password, n, target.size(), orthonormalize);
        return make(std::move(m), std::move(target), password, orthonormalize);
    }

    /// Template produced by a candidate image under this set's matrix.
    Template evaluate(GrayImage const& image) const { return enroll_with(image, matrix); }
};

/// Default strict-inequality margin: 1e-6 times the largest column norm.
inline double default_margin(ProjectionMatrix const& m) { return 1e-6 * m.max_column_norm(); }

/// Declarative description of one attack program.
struct AttackProblem {
    ProblemKind kind = ProblemKind::Merged;
    std::size_t height = 0;
    std::size_t width = 0;
    std::optional<GrayImage> anchor_image;        // I_A for every image-space kind
    std::optional<FeatureVector> anchor_feature;  // F_A for the feature phase
    std::optional<FeatureVector> feature_target;  // image phase only
    std::vector<SignConstraintSet> constraint_sets;
    double margin = 0.0;
    // Multi-authentication: templates that must accept the result within epsilon.
    std::vector<Template> members;
    std::size_t epsilon = 0;
    std::vector<std::string> warnings;

    std::size_t pixel_count() const noexcept { return height * width; }
    bool is_image_kind() const noexcept { return kind != ProblemKind::FeaturePhase; }
};

namespace detail {

inline double resolve_margin(std::optional<double> delta, ProjectionMatrix const& m) {
    double const d = delta.value_or(default_margin(m));
    if (!(d > 0.0)) throw std::invalid_argument("margin must be positive");
    return d;
}

}  // namespace detail

/// min ||x - F_A||^2  s.t.  x.M_i <= -delta (bit 0), x.M_j >= 0 (bit 1), x >= 0.
inline AttackProblem build_feature_phase(FeatureVector const& anchor, Template const& target,
                                         ProjectionMatrix const& matrix,
                                         std::optional<double> delta = std::nullopt,
                                         std::optional<std::string> password = std::nullopt) {
    if (anchor.size() != matrix.rows()) throw DimensionError("anchor feature length does not match matrix rows");
    AttackProblem p;
    p.kind = ProblemKind::FeaturePhase;
    p.height = 1;
    p.width = anchor.size();
    p.anchor_feature = anchor;
    p.constraint_sets.push_back(SignConstraintSet::make(matrix, target, std::move(password)));
    p.margin = detail::resolve_margin(delta, matrix);
    return p;
}

/// Largest gradient magnitude attainable with pixels in [0,255].
inline constexpr double kMaxSobelMagnitude = 4.0 * 255.0 * 1.4142135623730951;

/// Find an integer image whose Sobel magnitudes equal `target` (squared form).
/// `origin` optionally records the template the target came from so the
/// result can be certified against it.
inline AttackProblem build_image_phase(GrayImage const& anchor, FeatureVector const& target,
                                       std::optional<SignConstraintSet> origin = std::nullopt) {
    if (target.size() != anchor.size()) throw DimensionError("feature target length does not match image size");
    AttackProblem p;
    p.kind = ProblemKind::ImagePhase;
    p.height = anchor.height();
    p.width = anchor.width();
    p.anchor_image = anchor;
    p.feature_target = target;
    if (origin) {
        if (origin->matrix.rows() != anchor.size()) throw DimensionError("origin matrix rows do not match image size");
        p.margin = default_margin(origin->matrix);
        p.constraint_sets.push_back(std::move(*origin));
    }
    return p;
}

/// Single program over pixels X and magnitudes Y (two-phase attack merged).
inline AttackProblem build_merged(GrayImage const& anchor, Template const& target, ProjectionMatrix const& matrix,
                                  std::optional<double> delta = std::nullopt,
                                  std::optional<std::string> password = std::nullopt, bool orthonormalized = false) {
    if (matrix.rows() != anchor.size()) throw DimensionError("matrix rows do not match image pixel count");
    AttackProblem p;
    p.kind = ProblemKind::Merged;
    p.height = anchor.height();
    p.width = anchor.width();
    p.anchor_image = anchor;
    p.constraint_sets.push_back(SignConstraintSet::make(matrix, target, std::move(password), orthonormalized));
    p.margin = detail::resolve_margin(delta, matrix);
    return p;
}

inline AttackProblem build_merged(GrayImage const& anchor, Template const& target, std::string const& password,
                                  std::optional<double> delta = std::nullopt, bool orthonormalize = false) {
    return build_merged(anchor, target, derive_matrix(password, anchor.size(), target.size(), orthonormalize),
                        delta, password, orthonormalize);
}

// ---------------------------------------------------------------------------
// Hamming 1-center
// ---------------------------------------------------------------------------

struct CenterResult {
    Template center;
    std::size_t radius = 0;
    std::vector<Template> members;
    std::vector<std::size_t> member_indices;  // positions in the input list
};

namespace detail {

// Packs t_1 as the most significant of the low m bits.
inline std::uint64_t pack_bits(Template const& t) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < t.size(); ++i) v = (v << 1) | std::uint64_t(t[i]);
    return v;
}

inline Template unpack_bits(std::uint64_t v, std::size_t m) {
    std::vector<std::uint8_t> bits(m);
    for (std::size_t i = 0; i < m; ++i) bits[m - 1 - i] = static_cast<std::uint8_t>((v >> i) & 1u);
    return Template(std::move(bits));
}

inline std::size_t radius_of(Template const& c, std::vector<Template> const& ts) {
    std::size_t r = 0;
    for (auto const& t : ts) r = std::max(r, hamming_distance(c, t));
    return r;
}

// Exact minimax center. Candidates are scanned by increasing XOR-distance key
// to the first template, so the first optimum found is the tie-break winner.
inline std::pair<Template, std::size_t> exhaustive_center(std::vector<Template> const& ts) {
    std::size_t const m = ts.front().size();
    std::vector<std::uint64_t> packed;
    for (auto const& t : ts) packed.push_back(pack_bits(t));
    std::size_t lower = 0;
    for (std::size_t a = 0; a < packed.size(); ++a)
        for (std::size_t b = a + 1; b < packed.size(); ++b)
            lower = std::max<std::size_t>(lower, (std::popcount(packed[a] ^ packed[b]) + 1) / 2);
    std::uint64_t const first = packed.front();
    std::uint64_t best_key = 0;
    std::size_t best_r = m + 1;
    std::uint64_t const limit = std::uint64_t(1) << m;
    for (std::uint64_t key = 0; key < limit; ++key) {
        std::uint64_t const c = key ^ first;
        std::size_t r = 0;
        for (auto p : packed) {
            r = std::max<std::size_t>(r, std::popcount(c ^ p));
            if (r >= best_r) break;
        }
        if (r < best_r) {
            best_r = r;
            best_key = key;
            if (r == lower) break;
        }
    }
    return {unpack_bits(best_key ^ first, m), best_r};
}

// Two templates: keep agreements, give the first ceil(d/2) disagreements to
// the first template and the rest to the second.
inline std::pair<Template, std::size_t> pair_center(Template const& a, Template const& b) {
    std::size_t const d = hamming_distance(a, b);
    std::size_t const keep = (d + 1) / 2;
    std::vector<std::uint8_t> bits(a.bits().begin(), a.bits().end());
    std::size_t seen = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == b[i]) continue;
        if (seen++ >= keep) bits[i] = static_cast<std::uint8_t>(b[i]);
    }
    return {Template(std::move(bits)), d - keep > keep ? d - keep : keep};
}

// Majority vote followed by first-improvement bit flips on (radius, total distance).
inline std::pair<Template, std::size_t> local_center(std::vector<Template> const& ts) {
    std::size_t const m = ts.front().size();
    std::vector<std::uint8_t> bits(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t ones = 0;
        for (auto const& t : ts) ones += t[i];
        std::size_t const zeros = ts.size() - ones;
        bits[i] = ones > zeros ? 1 : (ones < zeros ? 0 : static_cast<std::uint8_t>(ts.front()[i]));
    }
    std::vector<std::size_t> dist(ts.size());
    auto score = [&](std::vector<std::size_t> const& d) {
        std::size_t r = 0, s = 0;
        for (auto x : d) { r = std::max(r, x); s += x; }
        return std::pair{r, s};
    };
    for (std::size_t k = 0; k < ts.size(); ++k) dist[k] = hamming_distance(Template(bits), ts[k]);
    auto current = score(dist);
    for (bool improved = true; improved;) {
        improved = false;
        for (std::size_t i = 0; i < m; ++i) {
            std::vector<std::size_t> d2 = dist;
            for (std::size_t k = 0; k < ts.size(); ++k) d2[k] += (bits[i] == ts[k][i]) ? 1 : std::size_t(-1);
            auto const s2 = score(d2);
            if (s2 < current) {
                bits[i] ^= 1u;
                dist = std::move(d2);
                current = s2;
                improved = true;
            }
        }
    }
    return {Template(std::move(bits)), current.first};
}

inline std::pair<Template, std::size_t> minimax_center(std::vector<Template> const& ts) {
    if (ts.size() == 1) return {ts.front(), 0};
    if (ts.size() == 2) return pair_center(ts[0], ts[1]);
    if (ts.front().size() <= 24) return exhaustive_center(ts);
    return local_center(ts);
}

}  // namespace detail

/// Template minimizing the largest Hamming distance to `templates`. When no
/// center lies within `epsilon` of all of them, the template farthest from the
/// current center is dropped (the later one on ties) until one does.
inline CenterResult hamming_center(std::vector<Template> const& templates, std::size_t epsilon) {
    if (templates.empty()) throw std::invalid_argument("hamming_center: no templates");
    std::size_t const m = templates.front().size();
    for (auto const& t : templates)
        if (t.size() != m) throw DimensionError("hamming_center: templates differ in length");

    std::vector<std::size_t> idx(templates.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (;;) {
        std::vector<Template> subset;
        for (auto i : idx) subset.push_back(templates[i]);
        auto [center, radius] = detail::minimax_center(subset);
        if (radius <= epsilon) return {std::move(center), radius, std::move(subset), std::move(idx)};
        std::size_t drop = 0, far = 0;
        for (std::size_t k = 0; k < subset.size(); ++k) {
            std::size_t const d = hamming_distance(center, subset[k]);
            if (d >= far) { far = d; drop = k; }
        }
        idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(drop));
    }
}

/// Multi-authentication program: merged structure aimed at `center` under
/// the attacker's own matrix; success means acceptance by every member.
inline AttackProblem build_multi_auth(GrayImage const& anchor, CenterResult const& center, std::size_t epsilon,
                                      ProjectionMatrix const& attacker_matrix,
                                      std::optional<double> delta = std::nullopt,
                                      std::optional<std::string> attacker_password = std::nullopt,
                                      bool orthonormalized = false) {
    AttackProblem p = build_merged(anchor, center.center, attacker_matrix, delta, std::move(attacker_password),
                                   orthonormalized);
    p.kind = ProblemKind::MultiAuth;
    p.members = center.members;
    p.epsilon = epsilon;
    for (auto const& t : p.members)
        if (t.size() != center.center.size()) throw DimensionError("member template length mismatch");
    return p;
}

/// Largest number of templates of length w a feature space of dimension n
/// can be expected to satisfy at once.
constexpr std::size_t capacity(std::size_t n, std::size_t w) {
    if (w == 0) throw std::invalid_argument("capacity: template size must be positive");
    return n / w;
}

/// Probability that k random vectors of dimension n with eta bits of
/// precision are linearly independent; evaluated as a sum of logs.
inline double independence_probability(std::size_t n, std::size_t k, std::size_t eta) {
    if (k == 0) throw std::invalid_argument("independence_probability: k must be positive");
    double log_p = 0.0;
    for (std::size_t i = 2; i <= k; ++i) {
        if (n + 1 <= i) return 0.0;  // factor (2^0 - 1) / 2^0
        double const exponent = double(eta) * double(n - i + 1);
        log_p += std::log1p(-std::exp2(-exponent));
    }
    return std::exp(log_p);
}

/// One image that enrolls to every victim's template under that victim's password.
inline AttackProblem build_multi_collision(GrayImage const& anchor,
                                           std::vector<std::pair<Template, std::string>> const& victims,
                                           std::optional<double> delta = std::nullopt,
                                           bool orthonormalize = false) {
    if (victims.size() < 2) throw std::invalid_argument("multi-collision needs at least two victims");
    AttackProblem p;
    p.kind = ProblemKind::MultiCollision;
    p.height = anchor.height();
    p.width = anchor.width();
    p.anchor_image = anchor;
    std::size_t total_bits = 0;
    double max_norm = 0.0;
    for (auto const& [tmpl, password] : victims) {
        for (auto const& other : p.constraint_sets)
            if (other.password == password) throw std::invalid_argument("multi-collision victims need distinct passwords");
        p.constraint_sets.push_back(SignConstraintSet::from_password(password, tmpl, anchor.size(), orthonormalize));
        max_norm = std::max(max_norm, p.constraint_sets.back().matrix.max_column_norm());
        total_bits += tmpl.size();
    }
    p.margin = delta.value_or(1e-6 * max_norm);
    if (!(p.margin > 0.0)) throw std::invalid_argument("margin must be positive");
    if (total_bits > anchor.size())
        p.warnings.push_back("total template bits " + std::to_string(total_bits) + " exceed feature dimension " +
                             std::to_string(anchor.size()) + "; the system may be infeasible");
    return p;
}

}  // namespace urp
