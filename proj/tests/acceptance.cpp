// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "checks.hpp"
#include "oracles.hpp"
#include "urpattack/bench.hpp"
#include "urpattack/qcqp.hpp"

using namespace urp;
using checks::random_image;
using checks::random_template;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(char const* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Outcome forward_conformance() {
    auto const t0 = std::chrono::steady_clock::now();
    SplitMix64 rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t const h = 1 + rng.below(8), w = 1 + rng.below(8);
        auto const img = random_image(rng, h, w);
        auto const px = img.to_ints();
        for (auto const& k : {kSobelG1, kSobelG2}) {
            auto const got = convolve(k, PaddedImage(img)).values;
            auto const want = oracle::convolve_definition(k, px, h, w);
            for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
        }
        auto const f = sobel(img);
        auto const want = oracle::sobel_definition(px, h, w);
        for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(f[i] - want[i]));
    }
    std::size_t bad_bits = 0, zeros = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> v(1 + rng.below(50));
        for (auto& x : v) {
            auto const r = rng.below(6);
            x = r == 0 ? 0.0 : (r == 1 ? -0.0 : rng.normal());
            zeros += r <= 1;
        }
        auto const t = binarize(v);
        for (std::size_t i = 0; i < v.size(); ++i) bad_bits += t[i] != (v[i] < 0.0 ? 0 : 1);
    }
    double const secs = seconds_since(t0);
    return {worst <= 1e-9 && bad_bits == 0 && zeros > 0 && secs < 10.0,
            fmt("max |err| %.3g over 1000 images, %zu binarize mismatches (%zu exact zeros), %.2f s", worst, bad_bits,
                zeros, secs)};
}

struct RateResult {
    int certified = 0;
    int trials = 0;
    double mean_distance = 0.0;
    double max_time = 0.0;
};

RateResult bench_cell(ImageSize size, std::size_t m, int trials, std::uint64_t seed) {
    BenchSpec spec;
    spec.image_sizes = {size};
    spec.template_sizes = {m};
    spec.trials = trials;
    spec.time_limit = 150.0;
    spec.rng_seed = seed;
    auto const row = run_bench_cell(size, m, spec);
    RateResult r;
    r.trials = trials;
    for (auto const& t : row.trials) {
        r.certified += t.certified;
        r.max_time = std::max(r.max_time, t.time);
    }
    r.mean_distance = row.mean_distance;
    return r;
}

Outcome certification_small() {
    auto const r = bench_cell({2, 2}, 20, 50, 202);
    return {r.certified >= 45 && r.max_time <= 151.0,
            fmt("2x2/20: %d/%d certified (need >= 45), mean distance %.2f, max time %.2f s", r.certified, r.trials,
                r.mean_distance, r.max_time)};
}

Outcome scaling_smoke() {
    auto const r = bench_cell({3, 3}, 20, 20, 303);
    return {r.certified >= 10 && std::isfinite(r.mean_distance),
            fmt("3x3/20: %d/%d certified (need >= 10), mean distance %.2f, max time %.2f s", r.certified, r.trials,
                r.mean_distance, r.max_time)};
}

Outcome desk_scale_optimality() {
    auto const t0 = std::chrono::steady_clock::now();
    SplitMix64 rng(404);
    int certified = 0, matched = 0, below = 0, trivial = 0;
    for (int t = 0; t < 100; ++t) {
        std::size_t const side = (t % 4 == 0) ? 1 : 2;
        std::size_t const m = 1 + rng.below(4);
        auto const a = random_image(rng, side, side);
        auto const v = random_image(rng, side, side);
        std::string const pw = "desk" + std::to_string(rng());
        auto const target = enroll(v, pw, m);
        // 2x2 instances are redrawn until the attacker does not already match.
        if (side == 2 && enroll(a, pw, m) == target) {
            --t;
            continue;
        }
        trivial += side == 1;
        auto const p = build_merged(a, target, pw);
        SolverConfig cfg;
        cfg.rng_seed = std::uint64_t(t);
        auto const rep = solve_qcqp(p, cfg);
        oracle::ExhaustiveOptimum oracle(side, side, a.to_ints(), {{p.constraint_sets[0].matrix, target}});
        double const best = oracle.solve();
        if (!is_certified(rep.status)) continue;
        ++certified;
        if (rep.objective == best) ++matched;
        if (rep.objective < best) ++below;
    }
    double const secs = seconds_since(t0);
    bool const ok = certified > 0 && matched * 100 >= 95 * certified && below == 0 && secs < 1800.0;
    return {ok, fmt("%d/%d certified objectives equal the exhaustive optimum, %d below it, %d single-pixel cases, %.1f s",
                    matched, certified, below, trivial, secs)};
}

Outcome multi_collision() {
    SplitMix64 rng(505);
    int both = 0;
    for (int t = 0; t < 20; ++t) {
        auto const a = random_image(rng, 4, 4);
        std::vector<std::pair<Template, std::string>> victims;
        for (int k = 0; k < 2; ++k) {
            std::string const pw = "mc" + std::to_string(t) + "_" + std::to_string(k);
            victims.emplace_back(enroll(random_image(rng, 4, 4), pw, 8), pw);
        }
        auto const p = build_multi_collision(a, victims);
        SolverConfig cfg;
        cfg.rng_seed = std::uint64_t(t);
        auto const rep = solve_qcqp(p, cfg);
        if (!is_certified(rep.status)) continue;
        bool ok = true;
        for (auto const& [tmpl, pw] : victims) ok = ok && enroll(*rep.image, pw, 8) == tmpl;
        both += ok;
    }
    return {both >= 14, fmt("4x4, two 8-bit victims: %d/20 trials certify both (need >= 14)", both)};
}

Outcome multi_auth() {
    SplitMix64 rng(606);
    std::size_t const m = 20, eps = 3;
    int accepted = 0, radius_ok = 0, trials = 0;
    for (int t = 0; t < 10; ++t) {
        std::string const pw = "ma" + std::to_string(t);
        auto const v1 = random_image(rng, 4, 4);
        auto const t1 = enroll(v1, pw, m);
        // Second victim: a noisy capture of a nearby finger, kept when within 2*eps.
        Template t2 = t1;
        for (;;) {
            auto px = v1.to_ints();
            for (auto& p : px) p = std::clamp(p + int(std::lround(25.0 * rng.normal())), 0, 255);
            t2 = enroll(GrayImage(4, 4, px), pw, m);
            std::size_t const d = hamming_distance(t1, t2);
            if (d >= 1 && d <= 2 * eps) break;
        }
        auto const center = hamming_center({t1, t2}, eps);
        radius_ok += center.radius <= eps && center.members.size() == 2;
        auto const a = random_image(rng, 4, 4);
        auto const p = build_multi_auth(a, center, eps, derive_matrix(pw, 16, m), std::nullopt, pw);
        SolverConfig cfg;
        cfg.rng_seed = std::uint64_t(t);
        auto const rep = solve_qcqp(p, cfg);
        ++trials;
        if (!is_certified(rep.status)) continue;
        auto const got = enroll(*rep.image, pw, m);
        accepted += verify(got, t1, eps).accepted;
        accepted += verify(got, t2, eps).accepted;
    }
    return {accepted == 20 && radius_ok == 10,
            fmt("m=20, eps=3: center radius <= eps in %d/10 pairs, %d/20 member acceptances", radius_ok, accepted)};
}

Outcome center_exactness() {
    auto const t0 = std::chrono::steady_clock::now();
    SplitMix64 rng(707);
    int agree = 0;
    for (int t = 0; t < 500; ++t) {
        std::size_t const m = 1 + rng.below(12), k = 1 + rng.below(4);
        std::vector<Template> ts;
        for (std::size_t i = 0; i < k; ++i) ts.push_back(random_template(rng, m));
        std::size_t best = m + 1;
        for (unsigned c = 0; c < (1u << m); ++c) {
            std::size_t r = 0;
            for (auto const& tt : ts) {
                std::size_t d = 0;
                for (std::size_t i = 0; i < m; ++i) d += ((c >> i) & 1u) != unsigned(tt[i]);
                r = std::max(r, d);
            }
            best = std::min(best, r);
        }
        auto const got = hamming_center(ts, m);
        std::size_t actual = 0;
        for (auto const& tt : ts) actual = std::max(actual, hamming_distance(got.center, tt));
        agree += got.radius == best && actual == best && got.members.size() == k;
    }
    double const secs = seconds_since(t0);
    return {agree == 500 && secs < 60.0, fmt("%d/500 cases equal the exhaustive minimax radius, %.2f s", agree, secs)};
}

Outcome hand_values() {
    bool const ok = independence_probability(7, 1, 5) == 1.0 && independence_probability(2, 2, 1) == 0.5 &&
                    capacity(16, 8) == 2;
    return {ok, fmt("P(k=1)=%g, P(n=2,k=2,eta=1)=%g, floor(16/8)=%zu", independence_probability(7, 1, 5),
                    independence_probability(2, 2, 1), capacity(16, 8))};
}

Outcome reproducibility() {
    GrayImage const img(4, 4, {12, 200, 37, 90, 255, 0, 18, 77, 64, 64, 64, 64, 3, 141, 59, 26});
    bool const tmpl = enroll(img, "alice", 20) == enroll(img, "alice", 20) &&
                      enroll(img, "alice", 20).to_string() == "01000011001111110001";
    std::uint64_t const d1 = matrix_digest(derive_matrix("alice", 16, 20));
    std::uint64_t const d2 = matrix_digest(derive_matrix("alice", 16, 20));
    bool const digest = d1 == d2 && d1 == 0x790AEFBDE31E7F9Eull;
    BenchSpec spec;
    spec.image_sizes = {{2, 2}, {3, 3}};
    spec.template_sizes = {10, 20};
    spec.trials = 3;
    spec.rng_seed = 909;
    spec.timing = false;
    std::ostringstream a, b;
    run_bench(spec, &a);
    run_bench(spec, &b);
    bool const csv = a.str() == b.str() && !a.str().empty();
    return {tmpl && digest && csv, fmt("templates %s, matrix digest %s, benchmark CSV %s", tmpl ? "identical" : "DIFFER",
                                       digest ? "identical" : "DIFFERS", csv ? "byte-identical" : "DIFFERS")};
}

Outcome gradients() {
    SplitMix64 rng(1010);
    double worst = 0.0;
    int points = 0;
    for (int t = 0; t < 25; ++t) {
        std::size_t const h = 1 + rng.below(3), w = 1 + rng.below(3);
        auto const a = random_image(rng, h, w), v = random_image(rng, h, w);
        auto const op = GradientOperator::build(h, w);
        std::vector<AttackProblem> problems;
        problems.push_back(build_merged(a, enroll(v, "fd", 12), "fd"));
        problems.push_back(build_image_phase(a, sobel(v)));
        problems.push_back(build_multi_collision(a, {{random_template(rng, 5), "x"}, {random_template(rng, 5), "y"}}));
        auto const center = hamming_center({random_template(rng, 10), random_template(rng, 10)}, 10);
        problems.push_back(build_multi_auth(a, center, 2, derive_matrix("fa", h * w, 10)));
        for (auto const& p : problems) {
            Relaxation const model(p, op, 0.01);
            worst = std::max(worst, checks::gradient_gap(model, checks::random_point(model, rng), rng));
            ++points;
        }
    }
    return {points == 100 && worst < 1e-4,
            fmt("%d points over four program kinds, worst relative gap %.3g", points, worst)};
}

Outcome jl_smoke() {
    SplitMix64 rng(1111);
    std::size_t const n = 100, m = 50;
    double const eps = 0.75, scale = std::sqrt(12.0 / double(m));
    int inside = 0;
    for (int t = 0; t < 200; ++t) {
        auto const mat = derive_matrix("jl" + std::to_string(t), n, m);
        std::vector<double> diff(n);
        for (auto& d : diff) d = rng.normal() - rng.normal();
        double orig = 0.0, proj = 0.0;
        for (double d : diff) orig += d * d;
        auto const y = project(std::span<double const>(diff), mat);
        for (double v : y) proj += (scale * v) * (scale * v);
        inside += proj >= (1.0 - eps) * orig && proj <= (1.0 + eps) * orig;
    }
    return {inside >= 180, fmt("%d/200 pairs inside the (1 +- 0.75) squared-distance band (need >= 180)", inside)};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        char const* name;
        std::function<Outcome()> run;
    };
    std::vector<Criterion> const criteria{
        {1, "forward pipeline conformance", forward_conformance},
        {2, "attack certification 2x2/20", certification_small},
        {3, "scaling smoke 3x3/20", scaling_smoke},
        {4, "desk-scale optimality", desk_scale_optimality},
        {5, "multi-collision capacity", multi_collision},
        {6, "multi-auth geometry", multi_auth},
        {7, "hamming center exactness", center_exactness},
        {8, "hand-computed values", hand_values},
        {9, "bit-exact reproducibility", reproducibility},
        {10, "gradient validation", gradients},
        {11, "JL statistical smoke", jl_smoke},
    };
    int failed = 0;
    for (auto const& c : criteria) {
        auto const t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (std::exception const& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("[%s] criterion %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
        failed += !o.pass;
    }
    std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
