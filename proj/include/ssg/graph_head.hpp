#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ssg/rng.hpp"
#include "ssg/tensor.hpp"

namespace ssg {

// Head joining category nodes and domain nodes in one graph. Node rows are
// laid out categories first: rows [0, c) are categories, rows [c, c+n) are
// domains.
struct GraphHeadConfig {
    std::size_t n_domains = 0;
    std::size_t n_categories = 0;
    std::size_t embed_dim = 0;    // d
    std::size_t feature_dim = 0;  // D, width of the extractor output
    std::size_t layers = 2;
    double sigma = 0.005;
    bool add_self_loops = false;
    double init_scale = 0.005;
    double s_val = 0.1;
    // If false, a reveal subtracts the mask token from a single
    // deterministically chosen non-true domain row instead of all of them.
    bool perturb_all_negative = true;
    // Prototype mode freezes the category block by default; this keeps the
    // generated rows trainable instead.
    bool prototype_trainable = false;

    std::size_t node_count() const { return n_domains + n_categories; }
    void validate() const;
};

// Per-image mask state: either the domain identity is revealed or it is not.
struct MaskState {
    bool reveal = false;
    std::size_t true_domain = 0;
};

MaskState sample_mask_state(double mask_ratio, std::size_t true_domain, Rng& rng);

// Category and domain embeddings are held separately so variants can freeze
// the category block; full_embeddings() concatenates them in row order.
struct GraphHeadParams {
    Parameter category_embeddings;     // c x d
    Parameter domain_embeddings;       // n x d
    std::vector<Parameter> gcn_weights;  // layer l: width_l x width_{l+1}
    Tensor mask_token;                 // S, length d, never trainable
};

GraphHeadParams init_embeddings(const GraphHeadConfig& config, Rng& rng);

Tensor full_embeddings(const GraphHeadParams& params);

// A_ij = exp(-|z_i - z_j|^2 / (2 sigma^2)); the exponent is clamped at -50
// before exp so far-apart nodes keep exactly-positive entries.
Tensor build_adjacency(const Tensor& z, double sigma);

// Symmetric degree normalization D^-1/2 (A [+ I]) D^-1/2. The kernel already
// has unit diagonal, so self-loops are off by default.
Tensor normalize_adjacency(const Tensor& a, bool add_self_loops);

// H^(l+1) = relu(A_hat H^(l) W^(l)); ReLU is applied on the final layer too.
Tensor gcn_forward(const Tensor& h0, const Tensor& a_hat, std::span<const Parameter> weights);

// logits = relu(x_raw) . z_prime^T; row i, column j scores image i against
// node j.
Tensor predict(const Tensor& z_prime, const Tensor& x_raw);

// On reveal, the true domain row gains the mask token and the other domain
// rows lose it; category rows are never touched. Must be called after the
// adjacency has been built from the unperturbed embeddings.
Tensor apply_mask_perturbation(const Tensor& z, const MaskState& mask, const Tensor& s,
                               std::size_t n_categories, bool perturb_all_negative = true);

// Row k = mean extractor output over class-k rows of `features`. Used to seed
// the category block in prototype mode (requires d == D).
Tensor prototype_embeddings(const Tensor& features, const std::vector<int>& labels,
                            std::size_t n_classes);

}  // namespace ssg
