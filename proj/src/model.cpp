#include "ssg/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "ssg/errors.hpp"
#include "ssg/objectives.hpp"

namespace ssg {

ModelVariant parse_model_variant(const std::string& name) {
    if (name == "ssg") return ModelVariant::ssg;
    if (name == "ssg_prototype") return ModelVariant::ssg_prototype;
    if (name == "ssg_no_mask") return ModelVariant::ssg_no_mask;
    if (name == "linear") return ModelVariant::linear;
    throw ConfigError("unknown variant '" + name +
                      "' (expected ssg|ssg_prototype|ssg_no_mask|linear)");
}

std::string to_string(ModelVariant variant) {
    switch (variant) {
        case ModelVariant::ssg: return "ssg";
        case ModelVariant::ssg_prototype: return "ssg_prototype";
        case ModelVariant::ssg_no_mask: return "ssg_no_mask";
        case ModelVariant::linear: return "linear";
    }
    return "ssg";
}

// --- extractor ---------------------------------------------------------------

static Tensor normal_init(Shape shape, double stddev, Rng& rng) {
    std::size_t count = 1;
    for (std::size_t d : shape) count *= d;
    std::vector<double> v(count);
    for (double& x : v) x = rng.normal(0.0, stddev);
    return Tensor::from_values(std::move(shape), std::move(v));
}

Extractor init_extractor(const ExtractorConfig& config, Rng& rng) {
    if (config.input_dim == 0 || config.output_dim == 0) {
        throw ConfigError("extractor: input_dim and output_dim must be positive");
    }
    Extractor extractor;
    extractor.config = config;
    std::vector<std::size_t> widths{config.input_dim};
    widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
    widths.push_back(config.output_dim);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const double stddev = 1.0 / std::sqrt(static_cast<double>(widths[l]));
        extractor.weights.emplace_back("extractor.w" + std::to_string(l),
                                       normal_init({widths[l], widths[l + 1]}, stddev, rng));
        extractor.biases.emplace_back("extractor.b" + std::to_string(l),
                                      Tensor::zeros({widths[l + 1]}));
    }
    return extractor;
}

Tensor extractor_forward(const Extractor& extractor, const Tensor& inputs) {
    if (inputs.rank() != 2 || inputs.cols() != extractor.config.input_dim) {
        throw DimensionError("extractor: expected [batch x " +
                             std::to_string(extractor.config.input_dim) + "], got " +
                             shape_string(inputs.shape()));
    }
    Tensor h = inputs;
    const std::size_t layer_count = extractor.weights.size();
    for (std::size_t l = 0; l < layer_count; ++l) {
        h = add_row_vector(matmul(h, extractor.weights[l].tensor()),
                           extractor.biases[l].tensor());
        if (l + 1 < layer_count) h = relu(h);  // output stays linear; predict applies ReLU
    }
    return h;
}

// --- model assembly ----------------------------------------------------------

Model init_model(ModelVariant variant, const GraphHeadConfig& head_config,
                 const ExtractorConfig& extractor_config, Rng& rng,
                 const Dataset* prototype_source) {
    if (extractor_config.output_dim != head_config.feature_dim) {
        throw ConfigError("model: extractor output width " +
                          std::to_string(extractor_config.output_dim) +
                          " must equal feature_dim " + std::to_string(head_config.feature_dim));
    }

    Model model;
    model.variant = variant;
    model.head_config = head_config;

    Rng rng_extractor = rng.fork("init:extractor");
    Rng rng_head = rng.fork("init:head");
    Rng rng_linear = rng.fork("init:linear");

    model.extractor = init_extractor(extractor_config, rng_extractor);

    if (variant == ModelVariant::linear) {
        const double stddev = 1.0 / std::sqrt(static_cast<double>(head_config.feature_dim));
        model.w_sup = Parameter(
            "heads.w_sup",
            normal_init({head_config.n_categories, head_config.feature_dim}, stddev, rng_linear));
        model.w_ss = Parameter(
            "heads.w_ss",
            normal_init({head_config.n_domains, head_config.feature_dim}, stddev, rng_linear));
        return model;
    }

    model.head = init_embeddings(head_config, rng_head);

    if (variant == ModelVariant::ssg_prototype) {
        if (head_config.embed_dim != head_config.feature_dim) {
            throw ConfigError("prototype mode requires embed_dim == feature_dim");
        }
        if (prototype_source == nullptr) {
            throw ContractError("prototype mode needs the source dataset at initialization");
        }
        std::vector<double> rows;
        std::vector<int> labels;
        for (const Sample& s : prototype_source->samples) {
            if (!s.label) continue;
            rows.insert(rows.end(), s.features.begin(), s.features.end());
            labels.push_back(*s.label);
        }
        if (labels.empty()) {
            throw DegeneracyError("prototype mode: dataset has no labeled source samples");
        }
        Tensor features = Tensor::from_values(
            {labels.size(), prototype_source->feature_dim}, std::move(rows));
        Tensor prototypes = prototype_embeddings(extractor_forward(model.extractor, features),
                                                 labels, head_config.n_categories);
        model.head.category_embeddings =
            Parameter("embeddings.categories",
                      Tensor::from_values(prototypes.shape(),
                                          {prototypes.values().begin(), prototypes.values().end()}));
    }
    return model;
}

// --- forward passes ----------------------------------------------------------

ForwardOutput forward_ssg(const Model& model, const Tensor& batch_features,
                          const std::vector<MaskState>* mask_states) {
    const std::size_t c = model.head_config.n_categories;
    const std::size_t n = model.head_config.n_domains;
    const std::size_t batch = batch_features.rows();
    if (mask_states != nullptr && mask_states->size() != batch) {
        throw ContractError("forward_ssg: " + std::to_string(mask_states->size()) +
                            " mask states for batch of " + std::to_string(batch));
    }

    Tensor x = extractor_forward(model.extractor, batch_features);
    Tensor z = full_embeddings(model.head);
    Tensor a_hat = normalize_adjacency(build_adjacency(z, model.head_config.sigma),
                                       model.head_config.add_self_loops);

    // group images by perturbation state; key -1 = masked
    std::map<long, std::vector<std::size_t>> groups;
    if (mask_states == nullptr) {
        groups[-1].resize(batch);
        for (std::size_t i = 0; i < batch; ++i) groups[-1][i] = i;
    } else {
        for (std::size_t i = 0; i < batch; ++i) {
            const MaskState& state = (*mask_states)[i];
            groups[state.reveal ? static_cast<long>(state.true_domain) : -1].push_back(i);
        }
    }

    auto group_forward = [&](long key) {
        MaskState state;
        state.reveal = key >= 0;
        state.true_domain = key >= 0 ? static_cast<std::size_t>(key) : 0;
        Tensor h0 = apply_mask_perturbation(z, state, model.head.mask_token, c,
                                            model.head_config.perturb_all_negative);
        return gcn_forward(h0, a_hat, model.head.gcn_weights);
    };

    Tensor logits;
    if (groups.size() == 1) {
        logits = predict(group_forward(groups.begin()->first), x);
    } else {
        Tensor stacked;
        std::vector<std::size_t> positions(batch);
        std::size_t offset = 0;
        for (const auto& [key, rows] : groups) {
            Tensor group_logits = predict(group_forward(key), gather_rows(x, rows));
            stacked = stacked.defined() ? concat_rows(stacked, group_logits) : group_logits;
            for (std::size_t r : rows) positions[r] = offset++;
        }
        logits = gather_rows(stacked, positions);
    }

    ForwardOutput out;
    out.category_logits = slice_cols(logits, 0, c);
    out.domain_logits = slice_cols(logits, c, c + n);
    return out;
}

ForwardOutput forward_linear(const Model& model, const Tensor& batch_features) {
    Tensor x = extractor_forward(model.extractor, batch_features);
    auto [cat, dom] = linear_head_predict(x, model.w_sup.tensor(), model.w_ss.tensor());
    return {cat, dom};
}

ForwardOutput forward(const Model& model, const Tensor& batch_features,
                      const std::vector<MaskState>* mask_states, bool train_mode) {
    if (model.is_graph_variant()) {
        if (train_mode && mask_states == nullptr) {
            throw ContractError("forward: training pass needs mask states");
        }
        if (!train_mode && mask_states != nullptr) {
            throw ContractError("forward: eval pass must not carry mask states");
        }
        return forward_ssg(model, batch_features, mask_states);
    }
    return forward_linear(model, batch_features);
}

// --- parameter sets ----------------------------------------------------------

std::vector<Parameter> trainable_parameters(const Model& model) {
    std::vector<Parameter> params;
    for (const auto& w : model.extractor.weights) params.push_back(w);
    for (const auto& b : model.extractor.biases) params.push_back(b);
    if (model.is_graph_variant()) {
        if (model.variant != ModelVariant::ssg_prototype ||
            model.head_config.prototype_trainable) {
            params.push_back(model.head.category_embeddings);
        }
        params.push_back(model.head.domain_embeddings);
        for (const auto& w : model.head.gcn_weights) params.push_back(w);
    } else {
        params.push_back(model.w_sup);
        params.push_back(model.w_ss);
    }
    return params;
}

std::vector<Parameter> named_parameters(const Model& model) {
    std::vector<Parameter> params;
    for (const auto& w : model.extractor.weights) params.push_back(w);
    for (const auto& b : model.extractor.biases) params.push_back(b);
    if (model.is_graph_variant()) {
        params.push_back(model.head.category_embeddings);
        params.push_back(model.head.domain_embeddings);
        for (const auto& w : model.head.gcn_weights) params.push_back(w);
    } else {
        params.push_back(model.w_sup);
        params.push_back(model.w_ss);
    }
    return params;
}

// --- checkpoints ------------------------------------------------------------

void save_checkpoint(const std::string& path, const Model& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    out << "#ssg-checkpoint,version=1\n";
    char buf[40];
    for (const Parameter& p : named_parameters(model)) {
        out << p.name() << ' ' << p.shape().size();
        for (std::size_t d : p.shape()) out << ' ' << d;
        for (double v : p.values()) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << ' ' << buf;
        }
        out << "\n";
    }
    if (!out) throw ParseError("write failed for '" + path + "'");
}

void load_checkpoint(const std::string& path, Model& model) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "#ssg-checkpoint,version=1") {
        throw ParseError("line 1: not an ssg checkpoint");
    }
    int line_no = 1;
    for (Parameter& p : named_parameters(model)) {
        if (!std::getline(in, line)) {
            throw ParseError("checkpoint ends before parameter '" + p.name() + "'");
        }
        ++line_no;
        std::istringstream ss(line);
        std::string name;
        std::size_t rank = 0;
        if (!(ss >> name >> rank) || name != p.name() || rank != p.shape().size()) {
            throw ParseError("line " + std::to_string(line_no) + ": expected parameter '" +
                             p.name() + "'");
        }
        for (std::size_t expected : p.shape()) {
            std::size_t got = 0;
            if (!(ss >> got) || got != expected) {
                throw ParseError("line " + std::to_string(line_no) + ": shape mismatch for '" +
                                 p.name() + "'");
            }
        }
        auto values = p.values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!(ss >> values[i])) {
                throw ParseError("line " + std::to_string(line_no) + ": too few values for '" +
                                 p.name() + "'");
            }
        }
        double extra;
        if (ss >> extra) {
            throw ParseError("line " + std::to_string(line_no) + ": trailing values for '" +
                             p.name() + "'");
        }
    }
    if (std::getline(in, line) && !line.empty()) {
        throw ParseError("checkpoint has trailing content after the last parameter");
    }
}

}  // namespace ssg
