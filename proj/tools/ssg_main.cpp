#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssg/config.hpp"
#include "ssg/errors.hpp"
#include "ssg/metrics_io.hpp"

namespace fs = std::filesystem;
using namespace ssg;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config (JSON)")->required();
    cmd->add_option("--out", args.out_dir, "output directory")->required();
    cmd->add_option("--set", args.overrides, "config override key=value, repeatable");
}

ExperimentConfig prepare(const CommonArgs& args) {
    ExperimentConfig config = parse_config_file(args.config_path, args.overrides);
    fs::create_directories(args.out_dir);
    std::ofstream out(fs::path(args.out_dir) / "resolved_config.json", std::ios::binary);
    if (!out) throw ConfigError("cannot write resolved config into '" + args.out_dir + "'");
    out << resolved_config_json(config);
    return config;
}

std::string path_in(const CommonArgs& args, const std::string& name) {
    return (fs::path(args.out_dir) / name).string();
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::istringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (token.empty()) continue;
        seeds.push_back(std::stoull(token));
    }
    return seeds;
}

std::vector<double> parse_ratio_list(const std::string& text) {
    std::vector<double> ratios;
    std::istringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (token.empty()) continue;
        ratios.push_back(std::stod(token));
    }
    return ratios;
}

std::string ratio_tag(double ratio) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", ratio);
    std::string tag(buf);
    for (char& c : tag) {
        if (c == '.') c = 'p';
    }
    return tag;
}

int cmd_gen_data(const CommonArgs& args) {
    ExperimentConfig config = prepare(args);
    if (config.data.kind != DataSourceConfig::Kind::synthetic) {
        throw ConfigError("gen-data needs a synthetic data spec, not a file path");
    }
    Dataset dataset = generate_synthetic(config.data.synthetic);
    const std::string path = path_in(args, "features.csv");
    write_feature_file(path, dataset);
    std::cout << "wrote " << dataset.samples.size() << " samples (" << dataset.source_count()
              << " source, " << dataset.target_count() << " target) to " << path << "\n";
    return 0;
}

int cmd_train(const CommonArgs& args) {
    ExperimentConfig config = prepare(args);
    Dataset dataset = load_dataset(config);
    TrainResult result = train(config, dataset);

    write_metrics_jsonl(path_in(args, "metrics.jsonl"), result.metrics);
    emit_curves(path_in(args, "metrics.jsonl"), path_in(args, "curves.csv"));
    save_checkpoint(path_in(args, "checkpoint.txt"), result.model);

    const MetricsRecord& last = result.metrics.back();
    std::cout << "trained " << to_string(config.variant) << " for " << config.epochs
              << " epochs: l_total " << last.l_total << ", target_acc " << last.target_acc
              << ", domain_acc " << last.domain_acc << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& args) {
    ExperimentConfig config = prepare(args);
    Dataset dataset = load_dataset(config);

    Rng master(config.seed);
    Rng init_rng = master.fork("init");
    Model model = init_model(config.variant, config.head_config(),
                             config.extractor_config(dataset.feature_dim), init_rng, &dataset);
    load_checkpoint(path_in(args, "checkpoint.txt"), model);

    EvalResult eval = evaluate(model, dataset);
    std::ofstream out(path_in(args, "eval.csv"), std::ios::binary);
    char buf[40];
    out << "target_acc,domain_acc,target_eval_count\n";
    std::snprintf(buf, sizeof(buf), "%.17g", eval.target_accuracy);
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", eval.domain_accuracy);
    out << buf << ',' << eval.target_eval_count << "\n";

    std::cout << "target_acc " << eval.target_accuracy << " (" << eval.target_eval_count
              << " eval samples), domain_acc " << eval.domain_accuracy << "\n";
    return 0;
}

int cmd_gradcheck(const CommonArgs& args) {
    ExperimentConfig config = prepare(args);
    Dataset dataset = load_dataset(config);
    GradCheckReport report = run_gradcheck(config, dataset);

    std::ostringstream line;
    line << "gradcheck " << to_string(config.variant) << ": max relative error "
         << report.max_rel_error << " at " << report.worst_parameter << "["
         << report.worst_index << "] over " << report.coordinates_checked << " coordinates";
    if (!report.note.empty()) line << " (" << report.note << ")";
    std::cout << line.str() << "\n";

    std::ofstream out(path_in(args, "gradcheck.txt"), std::ios::binary);
    out << line.str() << "\n";

    const bool pass = report.all_finite && report.max_rel_error <= 1e-5;
    std::cout << (pass ? "PASS" : "FAIL") << " (threshold 1e-5)\n";
    return pass ? 0 : 1;
}

int cmd_ablate(const CommonArgs& args, const std::string& seeds_text) {
    ExperimentConfig config = prepare(args);
    Dataset dataset = load_dataset(config);
    std::vector<std::uint64_t> seeds = parse_seed_list(seeds_text);

    AblationSink sink = [&](const std::string& label, std::uint64_t seed,
                            const TrainResult& result) {
        const std::string stem = label + "_seed" + std::to_string(seed);
        write_metrics_jsonl(path_in(args, stem + ".jsonl"), result.metrics);
        emit_curves(path_in(args, stem + ".jsonl"), path_in(args, stem + ".curves.csv"));
        std::cout << "  " << label << " seed " << seed << ": target_acc "
                  << result.metrics.back().target_acc << "\n";
    };

    auto table = run_ablation_suite(config, dataset, seeds, sink);
    write_ablation_csv(path_in(args, "summary.csv"), table, seeds);
    std::cout << "variant mean std\n";
    for (const AblationRow& row : table) {
        std::cout << row.label << " " << row.mean_acc << " " << row.std_acc << "\n";
    }
    return 0;
}

int cmd_sweep_mask(const CommonArgs& args, const std::string& ratios_text) {
    ExperimentConfig config = prepare(args);
    Dataset dataset = load_dataset(config);
    std::vector<double> ratios = parse_ratio_list(ratios_text);

    auto results = run_mask_sweep(config, dataset, ratios);
    write_sweep_csv(path_in(args, "summary.csv"), results);
    for (const MaskSweepResult& entry : results) {
        write_metrics_jsonl(path_in(args, "ratio_" + ratio_tag(entry.ratio) + ".jsonl"),
                            entry.metrics);
        const MetricsRecord& last = entry.metrics.back();
        std::cout << "ratio " << entry.ratio << ": l_ss " << last.l_ss << ", domain_acc "
                  << last.domain_acc << ", target_acc " << last.target_acc << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-supervised graph head for multi-source domain adaptation"};
    app.require_subcommand(1);

    CommonArgs gen_args, train_args, eval_args, grad_args, ablate_args, sweep_args;
    std::string seeds_text = "1,2,3,4,5";
    std::string ratios_text = "0,0.25,0.5,0.75,0.9,0.95,1.0";

    add_common(app.add_subcommand("gen-data", "write a synthetic dataset as a feature CSV"),
               gen_args);
    add_common(app.add_subcommand("train", "train one model and record metrics"), train_args);
    add_common(app.add_subcommand("eval", "evaluate the checkpoint in the output directory"),
               eval_args);
    add_common(app.add_subcommand("gradcheck",
                                  "compare analytic gradients against finite differences"),
               grad_args);
    CLI::App* ablate = app.add_subcommand("ablate", "run the ablation table over several seeds");
    add_common(ablate, ablate_args);
    ablate->add_option("--seeds", seeds_text, "comma-separated seeds (default 1,2,3,4,5)");
    CLI::App* sweep = app.add_subcommand("sweep-mask", "train once per mask ratio");
    add_common(sweep, sweep_args);
    sweep->add_option("--ratios", ratios_text, "comma-separated mask ratios");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("gen-data")) return cmd_gen_data(gen_args);
        if (app.got_subcommand("train")) return cmd_train(train_args);
        if (app.got_subcommand("eval")) return cmd_eval(eval_args);
        if (app.got_subcommand("gradcheck")) return cmd_gradcheck(grad_args);
        if (app.got_subcommand("ablate")) return cmd_ablate(ablate_args, seeds_text);
        if (app.got_subcommand("sweep-mask")) return cmd_sweep_mask(sweep_args, ratios_text);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
