#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ssg/data.hpp"
#include "ssg/model.hpp"
#include "ssg/objectives.hpp"

namespace ssg {

struct DataSourceConfig {
    enum class Kind { synthetic, file };
    Kind kind = Kind::synthetic;
    SyntheticSpec synthetic;
    std::string path;
};

struct ExperimentConfig {
    ModelVariant variant = ModelVariant::ssg;
    LossWeights weights;
    double sigma = 0.005;
    bool add_self_loops = false;
    double mask_ratio = 0.95;
    double s_val = 0.1;
    double lr = 1e-4;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    bool drop_tgt_loss = false;
    bool drop_ss_loss = false;
    std::size_t n_domains = 4;
    std::size_t n_classes = 4;
    std::size_t embed_dim = 16;
    std::size_t feature_dim = 16;
    std::size_t gcn_layers = 2;
    std::size_t extractor_hidden = 64;
    DataSourceConfig data;

    void validate() const;
    GraphHeadConfig head_config() const;
    ExtractorConfig extractor_config(std::size_t input_dim) const;
    // Loss weights after the ablation switches; ssg_no_mask also forces
    // mask_ratio to 1.
    LossWeights effective_weights() const;
    double effective_mask_ratio() const;
};

Dataset load_dataset(const ExperimentConfig& config);

// Per-epoch measurements. Loss components are means over the epoch's batches;
// train accuracies come from the training-time forward passes; target
// accuracy is an end-of-epoch eval pass with unperturbed embeddings.
struct MetricsRecord {
    std::size_t epoch = 0;
    double l_src = 0.0;
    double l_tgt = 0.0;
    double l_ss = 0.0;
    double l_total = 0.0;
    double source_acc = 0.0;
    double domain_acc = 0.0;
    double target_acc = 0.0;
};

struct TrainResult {
    Model model;
    std::vector<MetricsRecord> metrics;
};

TrainResult train(const ExperimentConfig& config, const Dataset& dataset);

struct EvalResult {
    double target_accuracy = 0.0;
    double domain_accuracy = 0.0;
    std::size_t target_eval_count = 0;
};

EvalResult evaluate(const Model& model, const Dataset& dataset);

struct AblationRow {
    std::string label;
    double mean_acc = 0.0;
    double std_acc = 0.0;
    std::vector<double> per_seed;
};

// Invoked once per completed run so callers can persist per-run metrics.
using AblationSink =
    std::function<void(const std::string& label, std::uint64_t seed, const TrainResult& result)>;

// The seven rows behind the ablation table: loss subsets on the graph model,
// the prototype and no-mask variants, and the linear baseline. Requires at
// least three seeds.
std::vector<AblationRow> run_ablation_suite(const ExperimentConfig& base, const Dataset& dataset,
                                            std::span<const std::uint64_t> seeds,
                                            const AblationSink& sink = {});

struct MaskSweepResult {
    double ratio = 0.0;
    std::vector<MetricsRecord> metrics;
};

std::vector<MaskSweepResult> run_mask_sweep(const ExperimentConfig& config,
                                            const Dataset& dataset,
                                            std::span<const double> ratios);

// Central-difference check of the full training gradient on the first batch,
// with a fixed alternating reveal pattern (every other image revealed, its
// own domain as the token target). Covers every trainable parameter of the
// configured variant, including the path through the kernel adjacency.
GradCheckReport run_gradcheck(const ExperimentConfig& config, const Dataset& dataset,
                              double h = 1e-6);

}  // namespace ssg
