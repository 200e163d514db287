#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "urpattack/attack.hpp"
#include "urpattack/image.hpp"
#include "urpattack/pipeline.hpp"
#include "urpattack/solver.hpp"

namespace urp {

using json = nlohmann::json;

// Templates: either a bit string "0110..." or {"bits": m, "hex": "..."}.

inline json template_to_json(Template const& t) { return json{{"bits", t.size()}, {"hex", t.to_hex()}}; }

inline Template template_from_json(json const& j) {
    if (j.is_string()) return Template::from_string(j.get<std::string>());
    if (j.is_object() && j.contains("bits") && j.contains("hex"))
        return Template::from_hex(j.at("hex").get<std::string>(), j.at("bits").get<std::size_t>());
    throw ParseError("template: expected a bit string or {\"bits\", \"hex\"}");
}

inline json image_to_json(GrayImage const& img) {
    return json{{"height", img.height()}, {"width", img.width()}, {"pixels", img.to_ints()}};
}

inline GrayImage image_from_json(json const& j) {
    return GrayImage(j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>(),
                     j.at("pixels").get<std::vector<int>>());
}

inline json constraint_set_to_json(SignConstraintSet const& s) {
    json j{{"template", s.target.to_string()},
           {"zero_indices", s.zero_indices},
           {"one_indices", s.one_indices},
           {"rows", s.matrix.rows()},
           {"cols", s.matrix.cols()},
           {"orthonormalize", s.orthonormalized}};
    if (s.password) {
        j["password"] = *s.password;
    } else {
        j["matrix"] = std::vector<double>(s.matrix.data().begin(), s.matrix.data().end());
    }
    return j;
}

inline SignConstraintSet constraint_set_from_json(json const& j) {
    Template t = Template::from_string(j.at("template").get<std::string>());
    std::size_t const rows = j.at("rows").get<std::size_t>();
    bool const ortho = j.value("orthonormalize", false);
    SignConstraintSet s = j.contains("password")
        ? SignConstraintSet::from_password(j.at("password").get<std::string>(), std::move(t), rows, ortho)
        : SignConstraintSet::make(ProjectionMatrix(rows, j.at("cols").get<std::size_t>(),
                                                   j.at("matrix").get<std::vector<double>>()),
                                  std::move(t), std::nullopt, ortho);
    if (j.contains("zero_indices") && j.at("zero_indices").get<std::vector<std::size_t>>() != s.zero_indices)
        throw ParseError("constraint set: zero_indices disagree with the template");
    return s;
}

/// Archive form of an attack program. Matrices are stored by password
/// reference when one is known, inline (column-major) otherwise.
inline json problem_to_json(AttackProblem const& p) {
    json j{{"kind", to_string(p.kind)}, {"height", p.height}, {"width", p.width}, {"delta", p.margin}};
    if (p.anchor_image) j["anchor_image"] = image_to_json(*p.anchor_image);
    if (p.anchor_feature)
        j["anchor_feature"] = std::vector<double>(p.anchor_feature->values().begin(), p.anchor_feature->values().end());
    if (p.feature_target)
        j["feature_target"] = std::vector<double>(p.feature_target->values().begin(), p.feature_target->values().end());
    j["constraint_sets"] = json::array();
    for (auto const& s : p.constraint_sets) j["constraint_sets"].push_back(constraint_set_to_json(s));
    if (p.kind == ProblemKind::MultiAuth) {
        j["epsilon"] = p.epsilon;
        j["members"] = json::array();
        for (auto const& t : p.members) j["members"].push_back(t.to_string());
    }
    if (!p.warnings.empty()) j["warnings"] = p.warnings;
    return j;
}

inline AttackProblem problem_from_json(json const& j) {
    AttackProblem p;
    p.kind = problem_kind_from_string(j.at("kind").get<std::string>());
    p.height = j.at("height").get<std::size_t>();
    p.width = j.at("width").get<std::size_t>();
    p.margin = j.at("delta").get<double>();
    if (j.contains("anchor_image")) p.anchor_image = image_from_json(j.at("anchor_image"));
    if (j.contains("anchor_feature")) p.anchor_feature = FeatureVector(j.at("anchor_feature").get<std::vector<double>>());
    if (j.contains("feature_target")) p.feature_target = FeatureVector(j.at("feature_target").get<std::vector<double>>());
    for (auto const& s : j.at("constraint_sets")) p.constraint_sets.push_back(constraint_set_from_json(s));
    if (j.contains("members"))
        for (auto const& t : j.at("members")) p.members.push_back(Template::from_string(t.get<std::string>()));
    p.epsilon = j.value("epsilon", std::size_t{0});
    if (j.contains("warnings")) p.warnings = j.at("warnings").get<std::vector<std::string>>();
    return p;
}

inline json report_to_json(SolveReport const& r) {
    json cert = json::object();
    for (auto const& [k, v] : r.certification) cert[k] = v;
    json j{{"status", to_string(r.status)},
           {"objective", r.objective},
           {"euclidean_distance", r.euclidean_distance},
           {"wall_time", r.wall_time},
           {"certification", cert},
           {"note", r.note},
           {"restarts", r.restarts_used}};
    if (r.image) j["solution_pgm"] = to_pgm_string(*r.image);
    if (r.feature) j["solution_feature"] = std::vector<double>(r.feature->values().begin(), r.feature->values().end());
    return j;
}

}  // namespace urp
