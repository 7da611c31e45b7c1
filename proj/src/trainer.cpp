#include "ssg/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "ssg/errors.hpp"

namespace ssg {

void ExperimentConfig::validate() const {
    weights.validate();
    if (!(sigma > 0.0)) throw ConfigError("config: sigma must be > 0");
    if (mask_ratio < 0.0 || mask_ratio > 1.0) {
        throw ConfigError("config: mask_ratio must lie in [0,1]");
    }
    if (s_val < 0.0) throw ConfigError("config: s_val must be >= 0");
    if (lr < 0.0) throw ConfigError("config: lr must be >= 0");
    if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (n_domains < 2) throw ConfigError("config: n_domains must be >= 2");
    if (n_classes < 2) throw ConfigError("config: n_classes must be >= 2");
    if (embed_dim == 0 || feature_dim == 0) {
        throw ConfigError("config: embed_dim and feature_dim must be positive");
    }
    if (gcn_layers < 1) throw ConfigError("config: gcn_layers must be >= 1");
    if (variant == ModelVariant::ssg_prototype && embed_dim != feature_dim) {
        throw ConfigError("config: prototype variant requires embed_dim == feature_dim");
    }
    if (data.kind == DataSourceConfig::Kind::synthetic) {
        data.synthetic.validate();
        if (data.synthetic.n_domains != static_cast<int>(n_domains) ||
            data.synthetic.n_classes != static_cast<int>(n_classes)) {
            throw ConfigError("config: synthetic data counts disagree with n_domains/n_classes");
        }
    } else if (data.path.empty()) {
        throw ConfigError("config: data file path is empty");
    }
}

GraphHeadConfig ExperimentConfig::head_config() const {
    GraphHeadConfig head;
    head.n_domains = n_domains;
    head.n_categories = n_classes;
    head.embed_dim = embed_dim;
    head.feature_dim = feature_dim;
    head.layers = gcn_layers;
    head.sigma = sigma;
    head.add_self_loops = add_self_loops;
    head.s_val = s_val;
    return head;
}

ExtractorConfig ExperimentConfig::extractor_config(std::size_t input_dim) const {
    ExtractorConfig extractor;
    extractor.input_dim = input_dim;
    extractor.hidden = {extractor_hidden};
    extractor.output_dim = feature_dim;
    return extractor;
}

LossWeights ExperimentConfig::effective_weights() const {
    LossWeights w = weights;
    if (drop_tgt_loss) w.lambda = 0.0;
    if (drop_ss_loss) w.alpha2 = 0.0;
    return w;
}

double ExperimentConfig::effective_mask_ratio() const {
    return variant == ModelVariant::ssg_no_mask ? 1.0 : mask_ratio;
}

Dataset load_dataset(const ExperimentConfig& config) {
    if (config.data.kind == DataSourceConfig::Kind::synthetic) {
        return generate_synthetic(config.data.synthetic);
    }
    Dataset dataset = load_feature_file(config.data.path);
    if (dataset.n_domains != static_cast<int>(config.n_domains) ||
        dataset.n_classes != static_cast<int>(config.n_classes)) {
        throw ConfigError("config: feature file declares " + std::to_string(dataset.n_domains) +
                          " domains / " + std::to_string(dataset.n_classes) +
                          " classes, config expects " + std::to_string(config.n_domains) + "/" +
                          std::to_string(config.n_classes));
    }
    return dataset;
}

namespace {

Tensor features_for(const Dataset& dataset, const std::vector<std::size_t>& rows) {
    std::vector<double> values;
    values.reserve(rows.size() * dataset.feature_dim);
    for (std::size_t r : rows) {
        const Sample& s = dataset.samples[r];
        values.insert(values.end(), s.features.begin(), s.features.end());
    }
    return Tensor::from_values({rows.size(), dataset.feature_dim}, std::move(values));
}

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j) {
        if (logits.at(row, j) > logits.at(row, best)) best = j;
    }
    return best;
}

void check_dataset_vs_config(const ExperimentConfig& config, const Dataset& dataset) {
    if (dataset.n_domains != static_cast<int>(config.n_domains) ||
        dataset.n_classes != static_cast<int>(config.n_classes)) {
        throw ConfigError("train: dataset domain/class counts disagree with config");
    }
    if (dataset.source_count() == 0) {
        throw TrainingError("train: dataset has no labeled source samples");
    }
    if (dataset.target_count() == 0) {
        throw TrainingError("train: dataset has no unlabeled target domain");
    }
}

}  // namespace

TrainResult train(const ExperimentConfig& config, const Dataset& dataset) {
    config.validate();
    check_dataset_vs_config(config, dataset);

    Rng master(config.seed);
    Rng init_rng = master.fork("init");
    Rng mask_rng = master.fork("mask");

    TrainResult result;
    result.model = init_model(config.variant, config.head_config(),
                              config.extractor_config(dataset.feature_dim), init_rng,
                              &dataset);
    std::vector<Parameter> params = trainable_parameters(result.model);

    BatchPlan plan;
    plan.batch_size = config.batch_size;
    plan.seed = master.fork("shuffle").seed();

    const LossWeights weights = config.effective_weights();
    const double mask_ratio = config.effective_mask_ratio();
    const bool graph_variant = result.model.is_graph_variant();

    // eval pass over the target split, reused every epoch
    std::vector<std::size_t> target_rows;
    std::vector<int> target_eval_labels;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const Sample& s = dataset.samples[i];
        if (s.label) continue;
        auto it = dataset.eval_only_target_labels().find(s.id);
        if (it == dataset.eval_only_target_labels().end()) continue;
        target_rows.push_back(i);
        target_eval_labels.push_back(it->second);
    }
    Tensor target_features =
        target_rows.empty() ? Tensor() : features_for(dataset, target_rows);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        auto batches = make_batches(dataset, plan, epoch);

        double sum_src = 0.0, sum_tgt = 0.0, sum_ss = 0.0, sum_total = 0.0;
        std::size_t source_hits = 0, source_total = 0;
        std::size_t domain_hits = 0, domain_total = 0;

        for (std::size_t b = 0; b < batches.size(); ++b) {
            const Batch& batch = batches[b];

            std::vector<std::size_t> rows = batch.source;
            rows.insert(rows.end(), batch.target.begin(), batch.target.end());

            std::vector<int> labels;
            labels.reserve(batch.source.size());
            std::vector<int> domains;
            domains.reserve(rows.size());
            for (std::size_t r : batch.source) labels.push_back(*dataset.samples[r].label);
            for (std::size_t r : rows) domains.push_back(dataset.samples[r].domain);

            std::vector<MaskState> states;
            states.reserve(rows.size());
            for (std::size_t r : rows) {
                states.push_back(sample_mask_state(
                    mask_ratio, static_cast<std::size_t>(dataset.samples[r].domain), mask_rng));
            }

            try {
                Tensor features = features_for(dataset, rows);
                ForwardOutput out = forward(result.model, features,
                                            graph_variant ? &states : nullptr, true);

                std::vector<std::size_t> source_pos(batch.source.size());
                for (std::size_t i = 0; i < source_pos.size(); ++i) source_pos[i] = i;

                Tensor l_src =
                    source_ce(gather_rows(out.category_logits, source_pos), labels);
                Tensor l_tgt = Tensor::scalar(0.0);
                if (!batch.target.empty()) {
                    std::vector<std::size_t> target_pos(batch.target.size());
                    for (std::size_t i = 0; i < target_pos.size(); ++i) {
                        target_pos[i] = batch.source.size() + i;
                    }
                    l_tgt = target_entropy(gather_rows(out.category_logits, target_pos));
                }
                Tensor l_ss = ss_domain_ce(out.domain_logits, domains);

                Tensor total = multitask_total(l_src, &l_tgt, &l_ss, weights);
                if (!std::isfinite(total.scalar_value())) {
                    throw TrainingError("non-finite total loss");
                }

                backward(total);
                sgd_step(params, config.lr);
                zero_grads(params);

                LossBreakdown breakdown = multitask(l_src.scalar_value(), l_tgt.scalar_value(),
                                                    l_ss.scalar_value(), weights);
                sum_src += breakdown.l_src;
                sum_tgt += breakdown.l_tgt;
                sum_ss += breakdown.l_ss;
                sum_total += total.scalar_value();

                for (std::size_t i = 0; i < batch.source.size(); ++i) {
                    source_hits +=
                        argmax_row(out.category_logits, i) == static_cast<std::size_t>(labels[i]);
                }
                source_total += batch.source.size();
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    domain_hits +=
                        argmax_row(out.domain_logits, i) == static_cast<std::size_t>(domains[i]);
                }
                domain_total += rows.size();
            } catch (const TrainingError& e) {
                throw TrainingError("epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(b) + ": " + e.what());
            }
        }

        MetricsRecord record;
        record.epoch = epoch;
        const double batch_count = static_cast<double>(batches.size());
        record.l_src = sum_src / batch_count;
        record.l_tgt = sum_tgt / batch_count;
        record.l_ss = sum_ss / batch_count;
        record.l_total = sum_total / batch_count;
        record.source_acc =
            source_total == 0 ? 0.0 : static_cast<double>(source_hits) / source_total;
        record.domain_acc =
            domain_total == 0 ? 0.0 : static_cast<double>(domain_hits) / domain_total;

        if (!target_rows.empty()) {
            ForwardOutput out = forward(result.model, target_features, nullptr, false);
            std::size_t hits = 0;
            for (std::size_t i = 0; i < target_rows.size(); ++i) {
                hits += argmax_row(out.category_logits, i) ==
                        static_cast<std::size_t>(target_eval_labels[i]);
            }
            record.target_acc = static_cast<double>(hits) / target_rows.size();
        }
        result.metrics.push_back(record);
    }
    return result;
}

EvalResult evaluate(const Model& model, const Dataset& dataset) {
    EvalResult result;

    std::vector<std::size_t> all_rows(dataset.samples.size());
    for (std::size_t i = 0; i < all_rows.size(); ++i) all_rows[i] = i;

    std::size_t domain_hits = 0;
    std::size_t target_hits = 0;

    // evaluation never perturbs embeddings
    constexpr std::size_t kChunk = 512;
    for (std::size_t begin = 0; begin < all_rows.size(); begin += kChunk) {
        const std::size_t end = std::min(begin + kChunk, all_rows.size());
        std::vector<std::size_t> rows(all_rows.begin() + begin, all_rows.begin() + end);
        ForwardOutput out = forward(model, features_for(dataset, rows), nullptr, false);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const Sample& s = dataset.samples[rows[i]];
            domain_hits +=
                argmax_row(out.domain_logits, i) == static_cast<std::size_t>(s.domain);
            if (!s.label) {
                auto it = dataset.eval_only_target_labels().find(s.id);
                if (it != dataset.eval_only_target_labels().end()) {
                    ++result.target_eval_count;
                    target_hits += argmax_row(out.category_logits, i) ==
                                   static_cast<std::size_t>(it->second);
                }
            }
        }
    }
    result.domain_accuracy = dataset.samples.empty()
                                 ? 0.0
                                 : static_cast<double>(domain_hits) / dataset.samples.size();
    result.target_accuracy = result.target_eval_count == 0
                                 ? 0.0
                                 : static_cast<double>(target_hits) / result.target_eval_count;
    return result;
}

std::vector<AblationRow> run_ablation_suite(const ExperimentConfig& base, const Dataset& dataset,
                                            std::span<const std::uint64_t> seeds,
                                            const AblationSink& sink) {
    if (seeds.size() < 3) throw ConfigError("ablation suite needs at least 3 seeds");

    struct VariantSpec {
        std::string label;
        ModelVariant variant;
        bool drop_tgt;
        bool drop_ss;
    };
    const std::vector<VariantSpec> rows = {
        {"l_src", ModelVariant::ssg, true, true},
        {"l_src+l_tgt", ModelVariant::ssg, false, true},
        {"l_src+l_ss", ModelVariant::ssg, true, false},
        {"ssg", ModelVariant::ssg, false, false},
        {"ssg_prototype", ModelVariant::ssg_prototype, false, false},
        {"ssg_no_mask", ModelVariant::ssg_no_mask, false, false},
        {"linear", ModelVariant::linear, false, false},
    };

    std::vector<AblationRow> table;
    for (const VariantSpec& row : rows) {
        AblationRow out;
        out.label = row.label;
        for (std::uint64_t seed : seeds) {
            ExperimentConfig config = base;
            config.variant = row.variant;
            config.drop_tgt_loss = row.drop_tgt;
            config.drop_ss_loss = row.drop_ss;
            config.seed = seed;
            if (row.variant == ModelVariant::ssg_prototype) {
                config.embed_dim = config.feature_dim;
            }
            TrainResult result = train(config, dataset);
            out.per_seed.push_back(result.metrics.back().target_acc);
            if (sink) sink(row.label, seed, result);
        }
        const double n = static_cast<double>(out.per_seed.size());
        double mean = 0.0;
        for (double v : out.per_seed) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : out.per_seed) var += (v - mean) * (v - mean);
        out.mean_acc = mean;
        out.std_acc = std::sqrt(var / (n - 1.0));
        table.push_back(std::move(out));
    }
    return table;
}

std::vector<MaskSweepResult> run_mask_sweep(const ExperimentConfig& config,
                                            const Dataset& dataset,
                                            std::span<const double> ratios) {
    std::vector<MaskSweepResult> results;
    for (double ratio : ratios) {
        if (ratio < 0.0 || ratio > 1.0) {
            throw ConfigError("mask sweep: ratio " + std::to_string(ratio) + " outside [0,1]");
        }
        ExperimentConfig run = config;
        run.mask_ratio = ratio;
        MaskSweepResult entry;
        entry.ratio = ratio;
        entry.metrics = train(run, dataset).metrics;
        results.push_back(std::move(entry));
    }
    return results;
}

GradCheckReport run_gradcheck(const ExperimentConfig& config, const Dataset& dataset, double h) {
    config.validate();
    check_dataset_vs_config(config, dataset);

    Rng master(config.seed);
    Rng init_rng = master.fork("init");
    Model model = init_model(config.variant, config.head_config(),
                             config.extractor_config(dataset.feature_dim), init_rng, &dataset);
    std::vector<Parameter> params = trainable_parameters(model);

    BatchPlan plan;
    plan.batch_size = config.batch_size;
    plan.seed = master.fork("shuffle").seed();
    const Batch batch = make_batches(dataset, plan, 1).front();

    std::vector<std::size_t> rows = batch.source;
    rows.insert(rows.end(), batch.target.begin(), batch.target.end());

    std::vector<int> labels;
    for (std::size_t r : batch.source) labels.push_back(*dataset.samples[r].label);
    std::vector<int> domains;
    for (std::size_t r : rows) domains.push_back(dataset.samples[r].domain);

    // fixed reveal pattern: every other image revealed
    std::vector<MaskState> states;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        MaskState state;
        state.reveal = (i % 2 == 0);
        state.true_domain = static_cast<std::size_t>(dataset.samples[rows[i]].domain);
        states.push_back(state);
    }

    std::vector<std::size_t> source_pos(batch.source.size());
    for (std::size_t i = 0; i < source_pos.size(); ++i) source_pos[i] = i;
    std::vector<std::size_t> target_pos(batch.target.size());
    for (std::size_t i = 0; i < target_pos.size(); ++i) {
        target_pos[i] = batch.source.size() + i;
    }

    Tensor features = features_for(dataset, rows);
    const LossWeights weights = config.effective_weights();
    const bool graph_variant = model.is_graph_variant();

    auto loss_fn = [&]() {
        ForwardOutput out = forward(model, features, graph_variant ? &states : nullptr, true);
        Tensor l_src = source_ce(gather_rows(out.category_logits, source_pos), labels);
        Tensor l_tgt = Tensor::scalar(0.0);
        if (!target_pos.empty()) {
            l_tgt = target_entropy(gather_rows(out.category_logits, target_pos));
        }
        Tensor l_ss = ss_domain_ce(out.domain_logits, domains);
        return multitask_total(l_src, &l_tgt, &l_ss, weights);
    };

    return finite_diff_check(loss_fn, params, h);
}

}  // namespace ssg
