#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "urpattack/attack.hpp"
#include "urpattack/image.hpp"
#include "urpattack/pipeline.hpp"
#include "urpattack/prng.hpp"
#include "urpattack/qcqp.hpp"

namespace urp {

struct ImageSize {
    std::size_t height = 0;
    std::size_t width = 0;
    bool operator==(ImageSize const&) const = default;
};

inline std::string to_string(ImageSize s) { return std::to_string(s.height) + "x" + std::to_string(s.width); }

inline ImageSize parse_image_size(std::string const& text) {
    auto const x = text.find('x');
    if (x == std::string::npos || x == 0 || x + 1 == text.size())
        throw std::invalid_argument("image size must look like HxW: " + text);
    std::size_t used = 0;
    ImageSize s;
    s.height = std::stoul(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument("bad image height: " + text);
    s.width = std::stoul(text.substr(x + 1), &used);
    if (used != text.size() - x - 1) throw std::invalid_argument("bad image width: " + text);
    if (s.height == 0 || s.width == 0) throw std::invalid_argument("image sizes must be positive");
    return s;
}

struct BenchSpec {
    std::vector<ImageSize> image_sizes{{2, 2}, {2, 3}, {3, 3}, {4, 3}, {4, 4}};
    std::vector<std::size_t> template_sizes{20, 30, 40, 50};
    int trials = 50;
    double time_limit = 150.0;
    std::uint64_t rng_seed = 0;
    unsigned jobs = 0;    // 0: hardware concurrency
    bool timing = true;   // false writes NA in the time column so reruns are byte-identical

    void validate() const {
        if (trials < 1) throw std::invalid_argument("trials must be at least 1");
        if (!(time_limit > 0.0)) throw std::invalid_argument("time_limit must be positive");
        if (image_sizes.empty() || template_sizes.empty()) throw std::invalid_argument("empty benchmark grid");
        for (auto s : image_sizes)
            if (s.height == 0 || s.width == 0) throw std::invalid_argument("image sizes must be positive");
        for (auto m : template_sizes)
            if (m == 0) throw std::invalid_argument("template sizes must be positive");
    }
};

struct BenchTrial {
    std::size_t index = 0;
    bool certified = false;
    double distance = 0.0;  // Euclidean, only meaningful when certified
    double time = 0.0;
    SolveStatus status = SolveStatus::Infeasible;
};

struct BenchRow {
    ImageSize image_size;
    std::size_t template_size = 0;
    double mean_distance = 0.0;  // over certified trials; NaN when none certified
    double mean_time = 0.0;
    double certified_rate = 0.0;
    std::vector<BenchTrial> trials;
};

inline constexpr char const* kBenchCsvHeader = "image_size,template_size,mean_distance,mean_time_s,certified_rate";

/// Pixels i.i.d. uniform on [0,255]: top byte of successive stream words.
inline GrayImage synth_image(std::size_t h, std::size_t w, SplitMix64& rng) {
    if (h == 0 || w == 0) throw DimensionError("image dimensions must be positive");
    std::vector<int> px(h * w);
    for (auto& p : px) p = static_cast<int>(rng() >> 56);
    return GrayImage(h, w, std::move(px));
}

inline std::vector<GrayImage> synth_images(std::size_t h, std::size_t w, std::size_t count, std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<GrayImage> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) out.push_back(synth_image(h, w, rng));
    return out;
}

namespace detail {

inline std::uint64_t trial_seed(std::uint64_t base, ImageSize size, std::size_t m, std::size_t trial) {
    SplitMix64 mix(base);
    std::uint64_t s = mix();
    for (std::uint64_t v : {std::uint64_t(size.height), std::uint64_t(size.width), std::uint64_t(m),
                            std::uint64_t(trial)}) {
        SplitMix64 step(s ^ (v * 0x9E3779B97F4A7C15ull));
        s = step();
    }
    return s;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string format_real(double v) {
    if (std::isnan(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace detail

/// One merged-attack trial: random attacker image, random victim image and
/// password, all drawn from the trial's own stream.
inline BenchTrial run_bench_trial(ImageSize size, std::size_t m, std::size_t index, BenchSpec const& spec) {
    SplitMix64 rng(detail::trial_seed(spec.rng_seed, size, m, index));
    GrayImage const attacker = synth_image(size.height, size.width, rng);
    GrayImage const victim = synth_image(size.height, size.width, rng);
    std::string const password = "bench-" + detail::hex64(rng());
    Template const target = enroll(victim, password, m);
    AttackProblem const problem = build_merged(attacker, target, password);
    SolverConfig cfg;
    cfg.time_limit = spec.time_limit;
    cfg.rng_seed = rng();
    SolveReport const rep = solve_qcqp(problem, cfg);
    BenchTrial t;
    t.index = index;
    t.status = rep.status;
    t.certified = is_certified(rep.status);
    t.distance = rep.euclidean_distance;
    t.time = rep.wall_time;
    return t;
}

inline BenchRow run_bench_cell(ImageSize size, std::size_t m, BenchSpec const& spec) {
    unsigned jobs = spec.jobs ? spec.jobs : std::max(1u, std::thread::hardware_concurrency());
    jobs = std::min<unsigned>(jobs, static_cast<unsigned>(spec.trials));
    std::vector<BenchTrial> results(static_cast<std::size_t>(spec.trials));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < results.size();) results[i] = run_bench_trial(size, m, i, spec);
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    BenchRow row;
    row.image_size = size;
    row.template_size = m;
    double dist = 0.0, time = 0.0;
    std::size_t certified = 0;
    for (auto const& t : results) {
        time += t.time;
        if (t.certified) {
            ++certified;
            dist += t.distance;
        }
    }
    row.mean_distance = certified ? dist / double(certified) : std::nan("");
    row.mean_time = time / double(results.size());
    row.certified_rate = double(certified) / double(results.size());
    row.trials = std::move(results);
    return row;
}

inline std::string csv_line(BenchRow const& row, bool timing) {
    std::ostringstream os;
    os << to_string(row.image_size) << ',' << row.template_size << ',' << detail::format_real(row.mean_distance)
       << ',' << (timing ? detail::format_real(row.mean_time) : std::string("NA")) << ','
       << detail::format_real(row.certified_rate);
    return os.str();
}

/// Runs the grid row by row. Each finished row is written to `csv` and
/// flushed, so an interrupted run leaves every completed row on disk.
inline std::vector<BenchRow> run_bench(BenchSpec const& spec, std::ostream* csv = nullptr,
                                       std::function<void(BenchRow const&)> const& on_row = {}) {
    spec.validate();
    if (csv) *csv << kBenchCsvHeader << '\n' << std::flush;
    std::vector<BenchRow> rows;
    for (auto size : spec.image_sizes)
        for (auto m : spec.template_sizes) {
            rows.push_back(run_bench_cell(size, m, spec));
            if (csv) *csv << csv_line(rows.back(), spec.timing) << '\n' << std::flush;
            if (on_row) on_row(rows.back());
        }
    return rows;
}

}  // namespace urp
