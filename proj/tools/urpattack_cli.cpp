// urpattack command-line front end.
//
// Exit codes: 0 success / certified, 1 verify rejected, 2 input error,
// 3 infeasible, 4 timed out, 5 relaxation converged but nothing certified.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "urpattack/attack.hpp"
#include "urpattack/bench.hpp"
#include "urpattack/image.hpp"
#include "urpattack/pipeline.hpp"
#include "urpattack/prng.hpp"
#include "urpattack/qcqp.hpp"
#include "urpattack/serialization.hpp"

namespace {

using urp::json;

constexpr int kExitOk = 0;
constexpr int kExitRejected = 1;
constexpr int kExitInput = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitTimedOut = 4;
constexpr int kExitContinuous = 5;

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::uint64_t seed = 0;
    double time_limit = 150.0;
    bool json_output = false;
    std::string config_path;
    json config = json::object();
};

json read_json_file(std::string const& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (json::parse_error const& e) {
        throw InputError(path + ": " + e.what());
    }
}

// Flag if given, else config key, else the current default.
template <class T>
void resolve(T& value, CLI::Option const* flag, json const& config, char const* key) {
    if (flag && flag->count() > 0) return;
    if (config.contains(key)) value = config.at(key).get<T>();
}

urp::SolverConfig solver_config(Globals const& g) {
    urp::SolverConfig cfg;
    cfg.time_limit = g.time_limit;
    cfg.rng_seed = g.seed;
    if (g.config.contains("solver")) {
        auto const& s = g.config.at("solver");
        cfg.max_outer_iterations = s.value("max_outer_iterations", cfg.max_outer_iterations);
        cfg.penalty_growth = s.value("penalty_growth", cfg.penalty_growth);
        cfg.feasibility_tol = s.value("feasibility_tol", cfg.feasibility_tol);
        cfg.repair_budget = s.value("repair_budget", cfg.repair_budget);
        cfg.restarts = s.value("restarts", cfg.restarts);
        cfg.improve_restarts = s.value("improve_restarts", cfg.improve_restarts);
        cfg.inner_iterations = s.value("inner_iterations", cfg.inner_iterations);
        cfg.exact_polish_points = s.value("exact_polish_points", cfg.exact_polish_points);
    }
    cfg.validate();
    return cfg;
}

int exit_code(urp::SolveStatus s) {
    switch (s) {
        case urp::SolveStatus::CertifiedOptimal:
        case urp::SolveStatus::CertifiedFeasible: return kExitOk;
        case urp::SolveStatus::ContinuousOnly: return kExitContinuous;
        case urp::SolveStatus::Infeasible: return kExitInfeasible;
        case urp::SolveStatus::TimedOut: return kExitTimedOut;
    }
    return kExitInfeasible;
}

struct VictimRecord {
    urp::Template tmpl;
    std::optional<std::string> password;
};

std::vector<VictimRecord> load_victims(std::string const& path) {
    json const j = read_json_file(path);
    if (!j.is_array() || j.empty()) throw InputError(path + ": expected a non-empty array of victim records");
    std::vector<VictimRecord> out;
    for (auto const& rec : j) {
        if (!rec.is_object() || !rec.contains("template")) throw InputError(path + ": victim record needs \"template\"");
        VictimRecord v{urp::template_from_json(rec.at("template")), std::nullopt};
        if (rec.contains("password")) v.password = rec.at("password").get<std::string>();
        out.push_back(std::move(v));
    }
    return out;
}

// ---------------------------------------------------------------------------

struct EnrollArgs {
    std::string image;
    std::string password;
    std::size_t m = 0;
    bool orthonormalize = false;
    std::string record;
};

int cmd_enroll(EnrollArgs const& a, Globals const& g) {
    auto const img = urp::load_pgm(a.image);
    auto const t = urp::enroll(img, a.password, a.m, a.orthonormalize);
    json const rec{{"template", t.to_string()}, {"m", a.m}, {"dims", {img.height(), img.width()}}};
    if (!a.record.empty()) {
        std::ofstream out(a.record);
        if (!out) throw InputError("cannot write " + a.record);
        out << rec.dump(2) << '\n';
    }
    std::cout << (g.json_output ? rec.dump() : t.to_string()) << '\n';
    return kExitOk;
}

struct VerifyArgs {
    std::string image;
    std::string password;
    std::string reference;
    std::size_t threshold = 0;
    bool orthonormalize = false;
};

int cmd_verify(VerifyArgs const& a, Globals const& g) {
    auto const ref = urp::Template::from_string(a.reference);
    auto const img = urp::load_pgm(a.image);
    auto const probe = urp::enroll(img, a.password, ref.size(), a.orthonormalize);
    auto const d = urp::verify(probe, ref, a.threshold);
    if (g.json_output) {
        std::cout << json{{"accepted", d.accepted}, {"distance", d.distance}, {"threshold", a.threshold},
                          {"probe", probe.to_string()}}
                         .dump()
                  << '\n';
    } else {
        std::cout << (d.accepted ? "accepted" : "rejected") << " distance=" << d.distance << '\n';
    }
    return d.accepted ? kExitOk : kExitRejected;
}

struct AttackArgs {
    std::string mode;
    std::string image;
    std::string victims;
    std::string out = "attack.pgm";
    std::string report;
    std::string password;  // attacker password for multi-auth
    std::size_t epsilon = 0;
    std::size_t m = 0;     // multi-auth template length override (defaults to the victims')
    bool orthonormalize = false;
    bool two_phase = false;
    std::optional<double> delta;
};

int cmd_attack(AttackArgs const& a, Globals const& g) {
    auto const anchor = urp::load_pgm(a.image);
    auto const victims = load_victims(a.victims);
    auto const cfg = solver_config(g);

    urp::AttackProblem problem;
    std::optional<urp::SolveReport> feature_step;
    std::vector<std::size_t> dropped;
    if (a.mode == "preimage") {
        if (victims.size() != 1) throw InputError("preimage expects exactly one victim record");
        if (!victims[0].password) throw InputError("preimage needs the victim's password");
        auto const& v = victims[0];
        if (a.two_phase) {
            auto const matrix = urp::derive_matrix(*v.password, anchor.size(), v.tmpl.size(), a.orthonormalize);
            auto fp = urp::build_feature_phase(urp::sobel(anchor), v.tmpl, matrix, a.delta, *v.password);
            feature_step = urp::solve_qp(fp, cfg);
            if (!urp::is_certified(feature_step->status)) {
                std::cerr << "feature phase: " << urp::to_string(feature_step->status) << '\n';
                return exit_code(feature_step->status);
            }
            problem = urp::build_image_phase(anchor, *feature_step->feature, fp.constraint_sets.front());
        } else {
            problem = urp::build_merged(anchor, v.tmpl, *v.password, a.delta, a.orthonormalize);
        }
    } else if (a.mode == "multi-auth") {
        if (a.password.empty()) throw InputError("multi-auth needs --password (the attacker's)");
        if (a.epsilon == 0) throw InputError("multi-auth needs --epsilon > 0");
        std::vector<urp::Template> ts;
        for (auto const& v : victims) ts.push_back(v.tmpl);
        auto const center = urp::hamming_center(ts, a.epsilon);
        for (std::size_t i = 0; i < ts.size(); ++i)
            if (std::find(center.member_indices.begin(), center.member_indices.end(), i) == center.member_indices.end())
                dropped.push_back(i);
        auto const matrix = urp::derive_matrix(a.password, anchor.size(), center.center.size(), a.orthonormalize);
        problem = urp::build_multi_auth(anchor, center, a.epsilon, matrix, a.delta, a.password, a.orthonormalize);
    } else if (a.mode == "multi-collision") {
        std::vector<std::pair<urp::Template, std::string>> vs;
        for (auto const& v : victims) {
            if (!v.password) throw InputError("multi-collision needs every victim's password");
            vs.emplace_back(v.tmpl, *v.password);
        }
        problem = urp::build_multi_collision(anchor, vs, a.delta, a.orthonormalize);
        if (!vs.empty()) {
            std::size_t const w = vs.front().first.size();
            std::size_t const cap = urp::capacity(anchor.size(), w);
            if (vs.size() > cap)
                std::cerr << "warning: " << vs.size() << " victims exceed the capacity floor(n/w) = " << cap << '\n';
        }
    } else {
        throw InputError("unknown attack mode: " + a.mode);
    }
    for (auto const& w : problem.warnings) std::cerr << "warning: " << w << '\n';

    auto const rep = urp::solve_qcqp(problem, cfg);
    json report = urp::report_to_json(rep);
    report["mode"] = a.mode;
    report["problem"] = urp::to_string(problem.kind);
    report["squared_distance"] = rep.objective;
    if (problem.kind == urp::ProblemKind::MultiAuth) {
        report["center"] = problem.constraint_sets.front().target.to_string();
        report["dropped_victims"] = dropped;
    }
    if (feature_step) report["feature_phase"] = urp::report_to_json(*feature_step);
    if (rep.image && urp::is_certified(rep.status)) urp::save_pgm(a.out, *rep.image);
    if (!a.report.empty()) {
        std::ofstream out(a.report);
        if (!out) throw InputError("cannot write " + a.report);
        out << report.dump(2) << '\n';
    }
    if (g.json_output) {
        std::cout << report.dump() << '\n';
    } else {
        std::printf("status %s distance %.4f squared %.0f time %.3f s\n", urp::to_string(rep.status),
                    rep.euclidean_distance, rep.objective, rep.wall_time);
        for (auto const& [k, v] : rep.certification) std::printf("  %s: %s\n", k.c_str(), v ? "certified" : "no");
    }
    return exit_code(rep.status);
}

struct BenchArgs {
    std::vector<std::string> sizes;
    std::vector<std::size_t> templates;
    int trials = 50;
    unsigned jobs = 0;
    bool no_timing = false;
    std::string out = "bench.csv";
};

int cmd_bench(BenchArgs const& a, Globals const& g, CLI::App const& sub) {
    urp::BenchSpec spec;
    spec.rng_seed = g.seed;
    spec.time_limit = g.time_limit;
    spec.trials = a.trials;
    spec.jobs = a.jobs;
    spec.timing = !a.no_timing;
    json const bc = g.config.value("bench", json::object());
    std::vector<std::string> sizes = a.sizes;
    std::vector<std::size_t> templates = a.templates;
    resolve(sizes, sub.get_option("--sizes"), bc, "sizes");
    resolve(templates, sub.get_option("--templates"), bc, "templates");
    resolve(spec.trials, sub.get_option("--trials"), bc, "trials");
    resolve(spec.jobs, sub.get_option("--jobs"), bc, "jobs");
    if (!sizes.empty()) {
        spec.image_sizes.clear();
        for (auto const& s : sizes) spec.image_sizes.push_back(urp::parse_image_size(s));
    }
    if (!templates.empty()) spec.template_sizes = templates;
    spec.validate();

    std::ofstream csv(a.out);
    if (!csv) throw InputError("cannot write " + a.out);
    auto rows = urp::run_bench(spec, &csv, [&](urp::BenchRow const& r) {
        if (!g.json_output) std::cout << urp::csv_line(r, spec.timing) << '\n' << std::flush;
    });
    if (g.json_output) {
        json arr = json::array();
        for (auto const& r : rows)
            arr.push_back({{"image_size", urp::to_string(r.image_size)},
                           {"template_size", r.template_size},
                           {"mean_distance", std::isnan(r.mean_distance) ? json(nullptr) : json(r.mean_distance)},
                           {"mean_time_s", r.mean_time},
                           {"certified_rate", r.certified_rate}});
        std::cout << arr.dump() << '\n';
    }
    return kExitOk;
}

struct SynthArgs {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t count = 1;
    std::string dir = ".";
    std::string prefix = "synth";
};

int cmd_synth(SynthArgs const& a, Globals const& g) {
    if (a.height == 0 || a.width == 0) throw InputError("image dimensions must be positive");
    auto const images = urp::synth_images(a.height, a.width, a.count, g.seed);
    if (!images.empty()) std::filesystem::create_directories(a.dir);
    json paths = json::array();
    for (std::size_t k = 0; k < images.size(); ++k) {
        char name[64];
        std::snprintf(name, sizeof name, "_%05zu.pgm", k);
        auto const path = (std::filesystem::path(a.dir) / (a.prefix + name)).string();
        urp::save_pgm(path, images[k]);
        paths.push_back(path);
        if (!g.json_output) std::cout << path << '\n';
    }
    if (g.json_output) std::cout << paths.dump() << '\n';
    return kExitOk;
}

struct DigestArgs {
    std::string password;
    std::size_t n = 0;
    std::size_t m = 0;
    bool orthonormalize = false;
};

int cmd_digest(DigestArgs const& a, Globals const& g) {
    auto const mat = urp::derive_matrix(a.password, a.n, a.m, a.orthonormalize);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(urp::matrix_digest(mat)));
    if (g.json_output)
        std::cout << json{{"digest", buf}, {"n", a.n}, {"m", a.m}}.dump() << '\n';
    else
        std::cout << buf << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"URP-Sobel template toolkit and attack harness"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    auto* seed_opt = app.add_option("--seed", g.seed, "RNG seed");
    auto* time_opt = app.add_option("--time-limit", g.time_limit, "solver wall-clock limit per attack, seconds");
    auto* json_opt = app.add_flag("--json", g.json_output, "print machine-readable JSON");
    app.add_option("--config", g.config_path, "JSON config file (flags take precedence)");

    EnrollArgs ea;
    auto* enroll = app.add_subcommand("enroll", "print the template of an image");
    enroll->add_option("image", ea.image, "PGM image")->required();
    enroll->add_option("--password,-p", ea.password, "user password")->required();
    enroll->add_option("-m,--bits", ea.m, "template length")->required()->check(CLI::PositiveNumber);
    enroll->add_flag("--orthonormalize", ea.orthonormalize, "orthonormalize the projection columns");
    enroll->add_option("--record", ea.record, "also write a JSON record here");

    VerifyArgs va;
    auto* verify = app.add_subcommand("verify", "enroll an image and compare against a reference template");
    verify->add_option("image", va.image, "PGM image")->required();
    verify->add_option("--password,-p", va.password, "user password")->required();
    verify->add_option("--template,-t", va.reference, "reference template bit string")->required();
    verify->add_option("--threshold", va.threshold, "accept when Hamming distance <= threshold");
    verify->add_flag("--orthonormalize", va.orthonormalize, "orthonormalize the projection columns");

    AttackArgs aa;
    auto* attack = app.add_subcommand("attack", "build and solve an attack program");
    attack->add_option("mode", aa.mode, "preimage | multi-auth | multi-collision")
        ->required()
        ->check(CLI::IsMember({"preimage", "multi-auth", "multi-collision"}));
    attack->add_option("--image,-i", aa.image, "attacker's PGM image")->required();
    attack->add_option("--victims,-v", aa.victims, "JSON victim records")->required();
    attack->add_option("--out,-o", aa.out, "output PGM (written when certified)");
    attack->add_option("--report", aa.report, "write the JSON report here");
    attack->add_option("--password,-p", aa.password, "attacker password (multi-auth)");
    attack->add_option("--epsilon,-e", aa.epsilon, "verification threshold (multi-auth)");
    attack->add_flag("--orthonormalize", aa.orthonormalize, "victims use orthonormalized projections");
    attack->add_flag("--two-phase", aa.two_phase, "preimage: solve the feature phase, then the image phase");
    attack->add_option("--delta", aa.delta, "strict-inequality margin");

    BenchArgs ba;
    auto* bench = app.add_subcommand("bench", "run the merged attack over a size grid and write CSV");
    bench->add_option("--sizes", ba.sizes, "image sizes, e.g. 2x2 3x3")->delimiter(',');
    bench->add_option("--templates", ba.templates, "template sizes")->delimiter(',');
    bench->add_option("--trials", ba.trials, "trials per cell");
    bench->add_option("--jobs", ba.jobs, "concurrent trials (0: one per core)");
    bench->add_flag("--no-timing", ba.no_timing, "write NA for mean time so reruns are byte-identical");
    bench->add_option("--out,-o", ba.out, "CSV path");

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "write uniformly random PGM images");
    synth->add_option("height", sa.height)->required();
    synth->add_option("width", sa.width)->required();
    synth->add_option("--count,-n", sa.count, "number of images");
    synth->add_option("--dir,-d", sa.dir, "output directory");
    synth->add_option("--prefix", sa.prefix, "file name prefix");

    DigestArgs da;
    auto* digest = app.add_subcommand("digest", "print the digest of a derived projection matrix");
    digest->add_option("--password,-p", da.password)->required();
    digest->add_option("-n", da.n, "rows (pixel count)")->required()->check(CLI::PositiveNumber);
    digest->add_option("-m", da.m, "columns (template length)")->required()->check(CLI::PositiveNumber);
    digest->add_flag("--orthonormalize", da.orthonormalize);

    try {
        app.parse(argc, argv);
    } catch (CLI::ParseError const& e) {
        int const rc = app.exit(e);
        return rc == 0 ? 0 : kExitInput;
    }

    try {
        if (!g.config_path.empty()) {
            g.config = read_json_file(g.config_path);
            if (!g.config.is_object()) throw InputError(g.config_path + ": expected a JSON object");
            resolve(g.seed, seed_opt, g.config, "seed");
            resolve(g.time_limit, time_opt, g.config, "time_limit");
            resolve(g.json_output, json_opt, g.config, "json");
        }
        if (!(g.time_limit > 0.0)) throw InputError("--time-limit must be positive");

        if (enroll->parsed()) return cmd_enroll(ea, g);
        if (verify->parsed()) return cmd_verify(va, g);
        if (attack->parsed()) return cmd_attack(aa, g);
        if (bench->parsed()) return cmd_bench(ba, g, *bench);
        if (synth->parsed()) return cmd_synth(sa, g);
        if (digest->parsed()) return cmd_digest(da, g);
    } catch (InputError const& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (urp::ParseError const& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kExitInput;
    } catch (json::exception const& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (std::invalid_argument const& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (std::exception const& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    }
    return kExitInput;
}
