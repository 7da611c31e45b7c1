#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssg/data.hpp"
#include "ssg/graph_head.hpp"
#include "ssg/tensor.hpp"

namespace ssg {

enum class ModelVariant { ssg, ssg_prototype, ssg_no_mask, linear };

ModelVariant parse_model_variant(const std::string& name);
std::string to_string(ModelVariant variant);

// Small trainable MLP standing in for the CNN backbone: input -> hidden
// layers with ReLU -> linear output of width D. The prediction step applies
// its own ReLU on top.
struct ExtractorConfig {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden{64};
    std::size_t output_dim = 0;
};

struct Extractor {
    ExtractorConfig config;
    std::vector<Parameter> weights;
    std::vector<Parameter> biases;
};

Extractor init_extractor(const ExtractorConfig& config, Rng& rng);
Tensor extractor_forward(const Extractor& extractor, const Tensor& inputs);

struct ForwardOutput {
    Tensor category_logits;  // batch x c
    Tensor domain_logits;    // batch x n
};

struct Model {
    ModelVariant variant = ModelVariant::ssg;
    GraphHeadConfig head_config;
    Extractor extractor;
    GraphHeadParams head;  // graph variants
    Parameter w_sup;       // linear variant, c x D
    Parameter w_ss;        // linear variant, n x D

    bool is_graph_variant() const { return variant != ModelVariant::linear; }
};

// Builds and initializes a model. Prototype mode seeds the category block
// with per-class mean extractor outputs over the labeled source samples and
// freezes it (the dataset is only consulted in that mode).
Model init_model(ModelVariant variant, const GraphHeadConfig& head_config,
                 const ExtractorConfig& extractor_config, Rng& rng,
                 const Dataset* prototype_source = nullptr);

// Graph forward pass. Order is fixed: the adjacency is built and normalized
// from the unperturbed embeddings first, the mask perturbation is applied to
// the GCN input afterwards. Images sharing a perturbation state share one
// graph pass. In eval (mask_states == nullptr) everything is masked.
ForwardOutput forward_ssg(const Model& model, const Tensor& batch_features,
                          const std::vector<MaskState>* mask_states);

ForwardOutput forward_linear(const Model& model, const Tensor& batch_features);

// Dispatches on the variant; mask_states must be provided iff train_mode.
ForwardOutput forward(const Model& model, const Tensor& batch_features,
                      const std::vector<MaskState>* mask_states, bool train_mode);

// Trainable set per variant: graph variants train extractor, embeddings and
// GCN weights (prototype mode freezes the category block); the linear variant
// trains extractor and both head matrices. The mask token is never trainable.
std::vector<Parameter> trainable_parameters(const Model& model);

// Every tensor that defines the model state, trainable or frozen, in
// deterministic order. This is what checkpoints serialize.
std::vector<Parameter> named_parameters(const Model& model);

void save_checkpoint(const std::string& path, const Model& model);
void load_checkpoint(const std::string& path, Model& model);

}  // namespace ssg
