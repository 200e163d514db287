#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "checks.hpp"
#include "urpattack/bench.hpp"
#include "urpattack/serialization.hpp"

using namespace urp;

TEST(Serialization, TemplateForms) {
    auto const t = Template::from_string("0110100111");
    EXPECT_EQ(template_from_json(template_to_json(t)), t);
    EXPECT_EQ(template_from_json(json("0110100111")), t);
    EXPECT_THROW(template_from_json(json(42)), ParseError);
}

TEST(Serialization, ProblemRoundTrip) {
    SplitMix64 rng(1);
    auto const a = checks::random_image(rng, 3, 3), v = checks::random_image(rng, 3, 3);
    auto const merged = build_merged(a, enroll(v, "ser", 12), "ser");
    auto const back = problem_from_json(json::parse(problem_to_json(merged).dump()));
    EXPECT_EQ(back.kind, merged.kind);
    EXPECT_EQ(*back.anchor_image, a);
    EXPECT_EQ(back.constraint_sets.front().matrix, merged.constraint_sets.front().matrix);
    EXPECT_EQ(back.constraint_sets.front().target, merged.constraint_sets.front().target);
    EXPECT_DOUBLE_EQ(back.margin, merged.margin);

    // Inline matrices survive exactly through the %.17g-free JSON number path.
    ProjectionMatrix m(2, 1, {0.1, -0.30000000000000004});
    auto const fp = build_feature_phase(FeatureVector(std::vector<double>{1, 2}), Template::from_string("1"), m);
    auto const fb = problem_from_json(json::parse(problem_to_json(fp).dump()));
    EXPECT_EQ(fb.constraint_sets.front().matrix, m);
    EXPECT_EQ(*fb.anchor_feature, *fp.anchor_feature);
}

TEST(Serialization, ReportCarriesSolutionAndCertification) {
    SplitMix64 rng(2);
    auto const a = checks::random_image(rng, 2, 2), v = checks::random_image(rng, 2, 2);
    auto const p = build_merged(a, enroll(v, "rep", 20), "rep");
    auto const r = solve_qcqp(p);
    ASSERT_TRUE(is_certified(r.status));
    auto const j = report_to_json(r);
    EXPECT_EQ(j.at("status").get<std::string>(), to_string(r.status));
    auto const img = from_pgm_string(j.at("solution_pgm").get<std::string>());
    // Reloading the solution reproduces the certification map.
    auto const again = certify(img, p);
    for (auto const& [k, ok] : again) EXPECT_EQ(j.at("certification").at(k).get<bool>(), ok);
}

TEST(ImageSize, Parsing) {
    EXPECT_EQ(parse_image_size("4x3"), (ImageSize{4, 3}));
    for (char const* bad : {"4", "x3", "4x", "0x3", "4x3y", "ax3"}) EXPECT_ANY_THROW(parse_image_size(bad)) << bad;
}

TEST(Synth, DeterministicAndSized) {
    auto const a = synth_images(3, 5, 4, 77), b = synth_images(3, 5, 4, 77);
    ASSERT_EQ(a.size(), 4u);
    EXPECT_EQ(a, b);
    EXPECT_NE(synth_images(3, 5, 1, 78).front(), a.front());
    EXPECT_TRUE(synth_images(2, 2, 0, 1).empty());
    EXPECT_THROW(synth_images(0, 2, 1, 1), DimensionError);
}

TEST(Synth, PixelHistogramRoughlyUniform) {
    auto const imgs = synth_images(100, 100, 10, 5);  // 1e5 pixels
    std::vector<double> counts(256, 0.0);
    for (auto const& img : imgs)
        for (auto p : img.pixels()) counts[p] += 1.0;
    double const expected = 1e5 / 256.0;
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // 255 degrees of freedom: the 0.999 quantile is about 330.5.
    EXPECT_LT(chi2, 330.5);
}

TEST(Bench, SmokeRowAndSchema) {
    BenchSpec spec;
    spec.image_sizes = {{2, 2}};
    spec.template_sizes = {20};
    spec.trials = 1;
    spec.time_limit = 20;
    std::ostringstream csv;
    auto const rows = run_bench(spec, &csv);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_LE(rows[0].trials[0].time, spec.time_limit + 1.0);
    std::istringstream in(csv.str());
    std::string header, line;
    std::getline(in, header);
    EXPECT_EQ(header, kBenchCsvHeader);
    std::getline(in, line);
    std::vector<std::string> fields;
    std::stringstream ls(line);
    for (std::string f; std::getline(ls, f, ',');) fields.push_back(f);
    ASSERT_EQ(fields.size(), 5u);
    EXPECT_EQ(fields[0], "2x2");
    EXPECT_EQ(fields[1], "20");
    double const rate = std::stod(fields[4]);
    EXPECT_GE(rate, 0.0);
    EXPECT_LE(rate, 1.0);
}

TEST(Bench, ReproducibleWithoutTiming) {
    BenchSpec spec;
    spec.image_sizes = {{2, 2}, {2, 3}};
    spec.template_sizes = {4, 8};
    spec.trials = 3;
    spec.timing = false;
    spec.rng_seed = 42;
    spec.jobs = 2;
    std::ostringstream a, b;
    run_bench(spec, &a);
    spec.jobs = 1;
    run_bench(spec, &b);
    std::string const text = a.str();
    EXPECT_EQ(text, b.str());
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}

TEST(Bench, SpecValidation) {
    BenchSpec spec;
    spec.trials = 0;
    EXPECT_THROW(spec.validate(), std::invalid_argument);
    spec = {};
    spec.template_sizes = {0};
    EXPECT_THROW(spec.validate(), std::invalid_argument);
}
