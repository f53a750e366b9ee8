// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end over the C interface.
//
// Exit codes: 0 success, 1 usage/config/io error, 2 partial run (some
// leaves gave up), 3 planning failure, 4 backend failure, 5 replay diverged.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "reca/reca.h"

namespace {

namespace fs = std::filesystem;

constexpr int kExitError = 1;
constexpr int kExitDiverged = 5;

struct CString {
    char* p = nullptr;
    ~CString() { reca_string_free(p); }
    std::string str() const { return p ? std::string(p) : std::string(); }
};

struct ConfigDeleter {
    void operator()(reca_config_t* c) const { reca_config_free(c); }
};
struct StateDeleter {
    void operator()(reca_state_t* s) const { reca_state_free(s); }
};
struct RunDeleter {
    void operator()(reca_run_t* r) const { reca_run_free(r); }
};
using ConfigPtr = std::unique_ptr<reca_config_t, ConfigDeleter>;
using StatePtr = std::unique_ptr<reca_state_t, StateDeleter>;
using RunPtr = std::unique_ptr<reca_run_t, RunDeleter>;

class CliError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void check(reca_status_t st, const std::string& what) {
    if (st != RECA_OK) throw CliError(what + ": " + reca_last_error());
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CliError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw CliError("cannot write " + path);
}

// Prints to stdout, or writes to `path` when given.
void emit(const std::string& text, const std::string& path) {
    if (path.empty()) {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') std::cout << '\n';
    } else {
        write_text(path, text.back() == '\n' ? text : text + "\n");
    }
}

int exit_for(reca_status_t st) {
    switch (st) {
        case RECA_OK: return 0;
        case RECA_PARTIAL: return 2;
        case RECA_PLANNING: return 3;
        case RECA_BACKEND: return 4;
        default: return kExitError;
    }
}

struct Globals {
    std::string config_file;
    std::vector<std::string> sets;
    std::string backend;
    std::string seed;
    std::string concurrency;
    std::string log_level;
};

ConfigPtr make_config(const Globals& g) {
    reca_config_t* raw = nullptr;
    check(reca_config_create(g.config_file.empty() ? nullptr : g.config_file.c_str(), &raw), "config");
    ConfigPtr cfg(raw);
    const auto set = [&](const std::string& k, const std::string& v) {
        check(reca_config_set(cfg.get(), k.c_str(), v.c_str()), "--set " + k);
    };
    for (const auto& kv : g.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw CliError("--set expects key=value, got '" + kv + "'");
        set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!g.backend.empty()) set("backend", g.backend);
    if (!g.seed.empty()) set("seed", g.seed);
    if (!g.concurrency.empty()) set("engine.concurrency", g.concurrency);
    if (!g.log_level.empty()) set("log.level", g.log_level);
    check(reca_config_validate(cfg.get()), "config");
    return cfg;
}

StatePtr load_state(const std::string& path) {
    reca_state_t* raw = nullptr;
    check(reca_state_from_json(read_text(path).c_str(), &raw), path);
    return StatePtr(raw);
}

std::string config_value(const reca_config_t* cfg, const char* key) {
    CString v;
    check(reca_config_get(cfg, key, &v.p), key);
    return v.str();
}

std::string intent_text(const std::string& intent, const std::string& intent_file) {
    if (!intent_file.empty()) return read_text(intent_file);
    if (intent.empty()) throw CliError("one of --intent or --intent-file is required");
    return intent;
}

std::vector<int> parse_durations(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(part, &used);
            if (used != part.size() || v <= 0) throw std::invalid_argument(part);
            out.push_back(v);
        } catch (const std::exception&) {
            throw CliError("--durations expects comma-separated positive integers, got '" + text + "'");
        }
    }
    if (out.empty()) throw CliError("--durations is empty");
    return out;
}

std::string summary_line(reca_run_t* run, const std::string& dir) {
    CString report;
    check(reca_run_report_json(run, &report.p), "report");
    return "{\"run_dir\":\"" + dir + "\",\"report\":" + report.str() + "}";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reca: state-grounded long-video generation controller"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config_file, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--set", g.sets, "override a config key (key=value), repeatable");
    app.add_option("--backend", g.backend, "shorthand for --set backend=...");
    app.add_option("--seed", g.seed, "shorthand for --set seed=...");
    app.add_option("-W,--concurrency", g.concurrency, "shorthand for --set engine.concurrency=...");
    app.add_option("--log-level", g.log_level, "shorthand for --set log.level=...");
    {
        CString keys;
        if (reca_config_describe(&keys.p) == RECA_OK) app.footer(keys.str());
    }

    std::string anchor_path, intent, intent_file, out, plan_path, run_id, run_dir, instance_path, answers_path;
    int duration = 0;
    std::string durations = "30,60,120,240";
    int seeds = 20;
    std::string calibrate;

    auto* plan = app.add_subcommand("plan", "propose and print a shot schedule");
    plan->add_option("--anchor", anchor_path, "anchor state (reca-state/1)")->required()->check(CLI::ExistingFile);
    plan->add_option("--intent", intent, "narrative intent");
    plan->add_option("--intent-file", intent_file, "read the intent from a file")->check(CLI::ExistingFile);
    plan->add_option("-T,--duration", duration, "target duration in seconds")->required()->check(CLI::PositiveNumber);
    plan->add_option("-o,--out", out, "write the plan here instead of stdout");

    auto* run = app.add_subcommand("run", "plan and execute, writing a run directory");
    run->add_option("--anchor", anchor_path, "anchor state (reca-state/1)")->required()->check(CLI::ExistingFile);
    run->add_option("--intent", intent, "narrative intent");
    run->add_option("--intent-file", intent_file, "read the intent from a file")->check(CLI::ExistingFile);
    run->add_option("-T,--duration", duration, "target duration in seconds")->required()->check(CLI::PositiveNumber);
    run->add_option("--plan", plan_path, "execute this plan verbatim")->check(CLI::ExistingFile);
    run->add_option("--run-id", run_id, "run directory name (default: UTC timestamp + config digest)");
    run->add_option("-o,--out", out, "run directory (overrides paths.out_dir/<run-id>)");

    auto* replay = app.add_subcommand("replay", "re-execute a run directory from its manifest");
    replay->add_option("--run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);
    replay->add_option("-o,--out", out, "also write the replayed run directory here");

    auto* simulate = app.add_subcommand("simulate", "controller comparison on the world simulator");
    simulate->add_option("--durations", durations, "comma-separated durations in seconds");
    simulate->add_option("--seeds", seeds, "seeds 1..N per duration")->check(CLI::PositiveNumber);
    simulate->add_option("-o,--out", out, "output directory (default: paths.out_dir/sim)");
    simulate->add_option("--calibrate", calibrate, "recompute the decay fixture, write it here and exit");

    auto* score = app.add_subcommand("score", "score a benchmark instance");
    score->add_option("--instance", instance_path, "msve-instance/1 document")->required()->check(CLI::ExistingFile);
    score->add_option("--answers", answers_path, "nbq-answers/1 document; omit to judge over http")
        ->check(CLI::ExistingFile);
    score->add_option("-o,--out", out, "write the report here instead of stdout");

    auto* report = app.add_subcommand("report", "print the report of a run directory");
    report->add_option("--run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help and --version exit 0; every other parse failure is a usage error.
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : kExitError;
    }

    try {
        if (simulate->parsed() && !calibrate.empty()) {
            CString doc;
            check(reca_calibrate_decay(&doc.p), "calibrate");
            write_text(calibrate, doc.str());
            std::cout << calibrate << '\n';
            return 0;
        }
        if (report->parsed()) {
            emit(read_text((fs::path(run_dir) / "report.json").string()), "");
            return 0;
        }
        if (replay->parsed()) {
            reca_run_t* raw = nullptr;
            size_t live = 0;
            int match = 0;
            const reca_status_t st = reca_replay(run_dir.c_str(), &raw, &live, &match);
            RunPtr r(raw);
            if (!r) check(st, "replay");
            if (!out.empty()) check(reca_run_write_artifacts(r.get(), out.c_str()), "write " + out);
            std::cout << "{\"live_calls\":" << live << ",\"timeline_match\":" << (match ? "true" : "false")
                      << ",\"exit_code\":" << reca_run_exit_code(r.get()) << "}\n";
            if (!match || live != 0) return kExitDiverged;
            return exit_for(st);
        }

        const ConfigPtr cfg = make_config(g);
        if (plan->parsed()) {
            const auto anchor = load_state(anchor_path);
            CString doc;
            check(reca_plan(cfg.get(), anchor.get(), intent_text(intent, intent_file).c_str(), duration, &doc.p),
                  "plan");
            emit(doc.str(), out);
            return 0;
        }
        if (run->parsed()) {
            const auto anchor = load_state(anchor_path);
            std::string plan_doc;
            if (!plan_path.empty()) plan_doc = read_text(plan_path);
            std::string dir = out;
            if (dir.empty()) {
                if (run_id.empty()) {
                    CString id;
                    check(reca_run_id(cfg.get(), &id.p), "run id");
                    run_id = id.str();
                }
                dir = (fs::path(config_value(cfg.get(), "paths.out_dir")) / run_id).string();
            }
            reca_run_t* raw = nullptr;
            const reca_status_t st =
                reca_run(cfg.get(), anchor.get(), intent_text(intent, intent_file).c_str(), duration,
                         plan_path.empty() ? nullptr : plan_doc.c_str(), &raw);
            RunPtr r(raw);
            if (!r) check(st, "run");
            if (st != RECA_OK) std::cerr << "reca: " << reca_last_error() << '\n';
            check(reca_run_write_artifacts(r.get(), dir.c_str()), "write " + dir);
            std::cout << summary_line(r.get(), dir) << '\n';
            return exit_for(st);
        }
        if (simulate->parsed()) {
            const auto ds = parse_durations(durations);
            std::string dir = out.empty() ? (fs::path(config_value(cfg.get(), "paths.out_dir")) / "sim").string() : out;
            CString csv, summary, svg;
            check(reca_simulate(cfg.get(), ds.data(), ds.size(), static_cast<size_t>(seeds), &csv.p, &summary.p,
                                &svg.p),
                  "simulate");
            write_text((fs::path(dir) / "retention.csv").string(), csv.str());
            write_text((fs::path(dir) / "summary.json").string(), summary.str() + "\n");
            write_text((fs::path(dir) / "retention.svg").string(), svg.str());
            std::cout << summary.str() << '\n';
            return 0;
        }
        if (score->parsed()) {
            const std::string inst = read_text(instance_path);
            std::string answers;
            if (!answers_path.empty()) answers = read_text(answers_path);
            CString doc;
            check(reca_score(cfg.get(), inst.c_str(), answers_path.empty() ? nullptr : answers.c_str(), &doc.p),
                  "score");
            emit(doc.str(), out);
            return 0;
        }
    } catch (const CliError& e) {
        std::cerr << "reca: " << e.what() << '\n';
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "reca: " << e.what() << '\n';
        return kExitError;
    }
    return kExitError;
}
