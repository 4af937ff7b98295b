#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>

#include "agat/config.hpp"
#include "agat/data.hpp"
#include "agat/dataset_store.hpp"
#include "agat/errors.hpp"
#include "agat/eval.hpp"
#include "agat/serialize.hpp"
#include "agat/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace agat;

namespace {

constexpr char kVersion[] = "agat 0.1.0";

std::string iso_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm {};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Accepts either a synth-data run directory or its data/ payload.
std::string resolve_dataset_dir(const std::string& path, const char* flag) {
    if (dataset_dir_valid(path)) return path;
    if (dataset_dir_valid(path + "/data")) return path + "/data";
    throw DependencyError(std::string(flag) + " does not point at a dataset (missing manifest.jsonl): " + path +
                          "; run synth-data first");
}

struct CommonArgs {
    std::string config_path;
    std::uint64_t seed = 1;
    std::string out;
};

struct ParsedConfig {
    Config cfg;
    DatasetSpec data_spec;
    train::TrainConfig train_cfg;
    train::MaskDerivationConfig mask_cfg;
    eval::EvalConfig eval_cfg;
};

// Every subcommand validates the whole config so an unknown key fails fast
// no matter which section it was meant for.
ParsedConfig load_config(const CommonArgs& args) {
    ParsedConfig p{Config::parse_file(args.config_path), {}, {}, {}, {}};
    p.cfg.set_int("data", "seed", static_cast<std::int64_t>(args.seed));
    p.cfg.set_int("train", "seed", static_cast<std::int64_t>(args.seed));
    p.data_spec = DatasetSpec::from_config(p.cfg);
    p.train_cfg = train::TrainConfig::from_config(p.cfg);
    p.mask_cfg = train::MaskDerivationConfig::from_config(p.cfg);
    p.eval_cfg = eval::EvalConfig::from_config(p.cfg);
    p.cfg.require_all_consumed();
    return p;
}

void write_manifest(const std::string& out_dir, const std::string& command, const ParsedConfig& p, std::uint64_t seed,
                    const std::string& dataset_hash, const std::string& started, const json& extra) {
    json m;
    m["command"] = command;
    m["config_hash"] = p.cfg.content_hash();
    m["dataset_manifest_hash"] = dataset_hash;
    m["seed"] = seed;
    m["artifact_version"] = kVersion;
    m["started_at"] = started;
    m["finished_at"] = iso_now();
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    write_file(out_dir + "/run_manifest.json", m.dump(2) + "\n");
}

void write_config_copy(const std::string& out_dir, const ParsedConfig& p) { write_file(out_dir + "/config.cfg", p.cfg.serialize()); }

int run_cli(int argc, char** argv) {
    CLI::App app{"attention-guided mask-gated adversarial domain translation toolbench"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string data_dir, train_data_dir, stage1_dir, stage1_direct_dir, masks_dir, baseline_dir, stage2_dir, annotation_dir;
    std::vector<std::string> report_runs;
    std::string routing_override;

    auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
        auto* copt = cmd->add_option("--config", args.config_path, "config file");
        if (needs_config) copt->required();
        cmd->add_option("--seed", args.seed, "master seed")->required();
        cmd->add_option("--out", args.out, "output run directory")->required();
    };

    CLI::App* synth = app.add_subcommand("synth-data", "generate the three-domain toy dataset");
    add_common(synth);

    CLI::App* baseline = app.add_subcommand("train-baseline", "plain cycle-consistent training (control arm)");
    add_common(baseline);
    baseline->add_option("--data", data_dir, "dataset directory")->required();

    CLI::App* annotation = app.add_subcommand("train-annotation-split", "split training with ground-truth masks");
    add_common(annotation);
    annotation->add_option("--data", data_dir, "dataset directory")->required();

    CLI::App* stage1 = app.add_subcommand("train-stage1", "learn attention maps via intermediate-domain adaptation");
    add_common(stage1);
    stage1->add_option("--data", data_dir, "dataset directory")->required();
    stage1->add_option("--routing", routing_override, "override train.stage1_routing (intermediate|direct)");

    CLI::App* derive = app.add_subcommand("derive-masks", "binarize attention maps into frozen masks");
    add_common(derive);
    derive->add_option("--data", data_dir, "dataset directory")->required();
    derive->add_option("--stage1", stage1_dir, "train-stage1 run directory")->required();

    CLI::App* stage2 = app.add_subcommand("train-stage2", "split training gated by derived masks");
    add_common(stage2);
    stage2->add_option("--data", data_dir, "dataset directory")->required();
    stage2->add_option("--masks", masks_dir, "derive-masks run directory")->required();

    CLI::App* evaluate = app.add_subcommand("evaluate", "metrics for trained arms on a held-out dataset");
    add_common(evaluate);
    evaluate->add_option("--data", data_dir, "held-out dataset directory")->required();
    evaluate->add_option("--train-data", train_data_dir, "training dataset directory (detector arms)");
    evaluate->add_option("--baseline", baseline_dir, "train-baseline run");
    evaluate->add_option("--stage2", stage2_dir, "train-stage2 run");
    evaluate->add_option("--annotation", annotation_dir, "train-annotation-split run");
    evaluate->add_option("--stage1", stage1_dir, "train-stage1 run (attention metrics)");
    evaluate->add_option("--stage1-direct", stage1_direct_dir, "direct-routing train-stage1 run");

    CLI::App* report = app.add_subcommand("report", "merge evaluate runs into the final grid");
    add_common(report, false);
    report->add_option("--run", report_runs, "evaluate run directory (repeatable)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    const std::string started = iso_now();

    if (synth->parsed()) {
        ParsedConfig p = load_config(args);
        DatasetSpec spec = p.data_spec;
        spec.seed = args.seed;
        const ToyDatasets data = build_dataset(spec);
        train::ensure_dir(args.out);
        save_dataset(args.out + "/data", data, spec);
        write_config_copy(args.out, p);
        int incomplete = 0;
        for (const auto* d : {&data.source, &data.target})
            for (const auto& s : d->samples) incomplete += s.placement_complete ? 0 : 1;
        json extra;
        extra["incomplete_placements"] = incomplete;
        write_manifest(args.out, "synth-data", p, args.seed, dataset_manifest_hash(args.out + "/data"), started, extra);
        std::cout << "dataset written to " << args.out << "/data\n";
        return kExitOk;
    }

    if (baseline->parsed() || annotation->parsed() || stage1->parsed() || stage2->parsed() || derive->parsed()) {
        ParsedConfig p = load_config(args);
        if (!routing_override.empty()) {
            p.train_cfg.stage1_routing = routing_override;
            p.train_cfg.validate();
            p.cfg.set("train", "stage1_routing", routing_override);
        }
        const std::string dataset = resolve_dataset_dir(data_dir, "--data");
        const ToyDatasets data = load_dataset(dataset);
        const std::string data_hash = dataset_manifest_hash(dataset);
        train::RunPaths out{args.out};
        train::ensure_dir(out.root);
        write_config_copy(args.out, p);
        json extra;
        extra["data"] = dataset;

        if (baseline->parsed()) {
            train::baseline_train(data, p.train_cfg, out);
            write_manifest(args.out, "train-baseline", p, args.seed, data_hash, started, extra);
        } else if (annotation->parsed()) {
            train::annotation_split_train(data, p.train_cfg, out);
            write_manifest(args.out, "train-annotation-split", p, args.seed, data_hash, started, extra);
        } else if (stage1->parsed()) {
            train::stage1_train(data, p.train_cfg, out);
            extra["routing"] = p.train_cfg.stage1_routing;
            write_manifest(args.out, "train-stage1", p, args.seed, data_hash, started, extra);
        } else if (derive->parsed()) {
            train::derive_masks_run(data, stage1_dir, p.mask_cfg, out);
            extra["stage1"] = stage1_dir;
            write_manifest(args.out, "derive-masks", p, args.seed, data_hash, started, extra);
        } else {
            train::stage2_train(data, masks_dir, p.train_cfg, out);
            extra["masks"] = masks_dir;
            write_manifest(args.out, "train-stage2", p, args.seed, data_hash, started, extra);
        }
        std::cout << "run written to " << args.out << "\n";
        return kExitOk;
    }

    if (evaluate->parsed()) {
        ParsedConfig p = load_config(args);
        eval::EvaluateInputs in;
        in.eval_data_dir = resolve_dataset_dir(data_dir, "--data");
        if (!train_data_dir.empty()) in.train_data_dir = resolve_dataset_dir(train_data_dir, "--train-data");
        in.baseline_run = baseline_dir;
        in.stage2_run = stage2_dir;
        in.annotation_run = annotation_dir;
        in.stage1_run = stage1_dir;
        in.stage1_direct_run = stage1_direct_dir;
        train::RunPaths out{args.out};
        train::ensure_dir(out.root);
        write_config_copy(args.out, p);
        eval::evaluate_run(in, p.eval_cfg, args.seed, out);
        write_manifest(args.out, "evaluate", p, args.seed, dataset_manifest_hash(in.eval_data_dir), started, json::object());
        std::cout << "evaluation written to " << args.out << "\n";
        return kExitOk;
    }

    if (report->parsed()) {
        std::vector<json> reports;
        for (const std::string& run : report_runs) {
            const std::string path = run + "/eval_report.json";
            if (!fs::exists(path)) throw DependencyError("no eval_report.json under " + run + "; run evaluate first");
            reports.push_back(json::parse(read_file(path)));
        }
        const json merged = eval::merge_reports(reports);
        eval::render_report(merged, args.out);
        json m;
        m["command"] = "report";
        m["runs"] = report_runs;
        m["seed"] = args.seed;
        m["artifact_version"] = kVersion;
        m["started_at"] = started;
        m["finished_at"] = iso_now();
        write_file(args.out + "/run_manifest.json", m.dump(2) + "\n");
        std::cout << "report written to " << args.out << "\n";
        return kExitOk;
    }

    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DependencyError& e) {
        std::cerr << "dependency error: " << e.what() << "\n";
        return kExitDependency;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
