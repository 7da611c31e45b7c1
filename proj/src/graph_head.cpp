#include "ssg/graph_head.hpp"

#include <cmath>
#include <string>

#include "ssg/errors.hpp"

namespace ssg {

namespace {
constexpr double kExponentClamp = -50.0;
}

void GraphHeadConfig::validate() const {
    if (n_domains < 2) throw ConfigError("graph head: n_domains must be >= 2");
    if (n_categories < 2) throw ConfigError("graph head: n_categories must be >= 2");
    if (!(sigma > 0.0)) throw ConfigError("graph head: sigma must be > 0");
    if (layers < 1) throw ConfigError("graph head: layers must be >= 1");
    if (embed_dim == 0 || feature_dim == 0) {
        throw ConfigError("graph head: embed_dim and feature_dim must be positive");
    }
}

MaskState sample_mask_state(double mask_ratio, std::size_t true_domain, Rng& rng) {
    MaskState state;
    state.true_domain = true_domain;
    state.reveal = rng.bernoulli(1.0 - mask_ratio);
    return state;
}

GraphHeadParams init_embeddings(const GraphHeadConfig& config, Rng& rng) {
    config.validate();
    const std::size_t c = config.n_categories, n = config.n_domains, d = config.embed_dim;

    auto normal_tensor = [&rng](Shape shape, double stddev) {
        std::size_t count = 1;
        for (std::size_t dim : shape) count *= dim;
        std::vector<double> v(count);
        for (double& x : v) x = rng.normal(0.0, stddev);
        return Tensor::from_values(std::move(shape), std::move(v));
    };

    GraphHeadParams params;
    params.category_embeddings =
        Parameter("embeddings.categories", normal_tensor({c, d}, config.init_scale));
    params.domain_embeddings =
        Parameter("embeddings.domains", normal_tensor({n, d}, config.init_scale));

    std::size_t width_in = d;
    for (std::size_t l = 0; l < config.layers; ++l) {
        const std::size_t width_out = (l + 1 == config.layers) ? config.feature_dim : d;
        params.gcn_weights.emplace_back(
            "gcn.w" + std::to_string(l),
            normal_tensor({width_in, width_out}, 1.0 / std::sqrt(static_cast<double>(width_in))));
        width_in = width_out;
    }

    params.mask_token = Tensor::full({d}, config.s_val);
    return params;
}

Tensor full_embeddings(const GraphHeadParams& params) {
    return concat_rows(params.category_embeddings.tensor(), params.domain_embeddings.tensor());
}

Tensor build_adjacency(const Tensor& z, double sigma) {
    if (!(sigma > 0.0)) throw ConfigError("build_adjacency: sigma must be > 0");
    Tensor sqdist = pairwise_sqdist(z);
    Tensor exponent = scale(sqdist, -1.0 / (2.0 * sigma * sigma));
    return exp(clamp_min(exponent, kExponentClamp));
}

Tensor normalize_adjacency(const Tensor& a, bool add_self_loops) {
    if (a.rank() != 2 || a.rows() != a.cols()) {
        throw DimensionError("normalize_adjacency: expected square matrix, got " +
                             shape_string(a.shape()));
    }
    for (double v : a.values()) {
        if (v < 0.0) throw DegeneracyError("normalize_adjacency: negative adjacency entry");
    }
    Tensor a_tilde = add_self_loops ? add(a, Tensor::identity(a.rows())) : a;
    Tensor degrees = row_sums(a_tilde);
    for (std::size_t i = 0; i < degrees.size(); ++i) {
        if (!(degrees.value_at(i) > 0.0)) {
            throw DegeneracyError("normalize_adjacency: zero row sum at node " + std::to_string(i));
        }
    }
    return sym_scale(a_tilde, rsqrt(degrees));
}

Tensor gcn_forward(const Tensor& h0, const Tensor& a_hat, std::span<const Parameter> weights) {
    if (weights.empty()) throw DimensionError("gcn_forward: no layer weights");
    Tensor h = h0;
    for (const Parameter& w : weights) {
        if (h.cols() != w.shape()[0]) {
            throw DimensionError("gcn_forward: layer width mismatch " + shape_string(h.shape()) +
                                 " vs " + shape_string(w.shape()));
        }
        h = relu(matmul(matmul(a_hat, h), w.tensor()));
    }
    return h;
}

Tensor predict(const Tensor& z_prime, const Tensor& x_raw) {
    if (x_raw.cols() != z_prime.cols()) {
        throw DimensionError("predict: feature width mismatch " + shape_string(x_raw.shape()) +
                             " vs " + shape_string(z_prime.shape()));
    }
    return matmul(relu(x_raw), transpose(z_prime));
}

Tensor apply_mask_perturbation(const Tensor& z, const MaskState& mask, const Tensor& s,
                               std::size_t n_categories, bool perturb_all_negative) {
    if (!mask.reveal) return z;

    const std::size_t total = z.rows(), d = z.cols();
    if (n_categories >= total) {
        throw DimensionError("apply_mask_perturbation: no domain rows in " +
                             shape_string(z.shape()));
    }
    const std::size_t n_domains = total - n_categories;
    if (mask.true_domain >= n_domains) {
        throw IndexError("apply_mask_perturbation: domain " + std::to_string(mask.true_domain) +
                         " out of range [0," + std::to_string(n_domains) + ")");
    }
    if (s.size() != d) {
        throw DimensionError("apply_mask_perturbation: mask token width " +
                             std::to_string(s.size()) + " vs embedding width " +
                             std::to_string(d));
    }

    Tensor delta = Tensor::zeros({total, d});
    auto dv = delta.mutable_values();
    auto sv = s.values();
    auto write_row = [&](std::size_t domain, double sign) {
        const std::size_t row = n_categories + domain;
        for (std::size_t k = 0; k < d; ++k) dv[row * d + k] = sign * sv[k];
    };
    write_row(mask.true_domain, +1.0);
    if (perturb_all_negative) {
        for (std::size_t j = 0; j < n_domains; ++j) {
            if (j != mask.true_domain) write_row(j, -1.0);
        }
    } else {
        // single negative state on the next domain in cyclic order
        if (n_domains > 1) write_row((mask.true_domain + 1) % n_domains, -1.0);
    }
    return add(z, delta);
}

Tensor prototype_embeddings(const Tensor& features, const std::vector<int>& labels,
                            std::size_t n_classes) {
    if (features.rank() != 2 || labels.size() != features.rows()) {
        throw DimensionError("prototype_embeddings: " + std::to_string(labels.size()) +
                             " labels for " + shape_string(features.shape()));
    }
    const std::size_t d = features.cols();
    std::vector<double> sums(n_classes * d, 0.0);
    std::vector<std::size_t> counts(n_classes, 0);
    auto fv = features.values();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes) {
            throw LabelError("prototype_embeddings: label " + std::to_string(labels[i]) +
                             " out of range [0," + std::to_string(n_classes) + ")");
        }
        const std::size_t k = static_cast<std::size_t>(labels[i]);
        ++counts[k];
        for (std::size_t j = 0; j < d; ++j) sums[k * d + j] += fv[i * d + j];
    }
    for (std::size_t k = 0; k < n_classes; ++k) {
        if (counts[k] == 0) {
            throw DegeneracyError("prototype_embeddings: class " + std::to_string(k) +
                                  " has no source samples");
        }
        for (std::size_t j = 0; j < d; ++j) sums[k * d + j] /= static_cast<double>(counts[k]);
    }
    return Tensor::from_values({n_classes, d}, std::move(sums));
}

}  // namespace ssg
