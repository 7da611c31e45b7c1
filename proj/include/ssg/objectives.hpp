#pragma once

#include <utility>
#include <vector>

#include "ssg/tensor.hpp"

namespace ssg {

struct LossWeights {
    double alpha1 = 1.0;   // supervised block weight
    double alpha2 = 0.1;   // self-supervised domain weight
    double lambda = 5.0;   // target entropy weight inside the supervised block
    void validate() const;
};

struct LossBreakdown {
    double l_src = 0.0;
    double l_tgt = 0.0;
    double l_ss = 0.0;
    double l_total = 0.0;
};

// Mean cross-entropy of category logits against source labels.
Tensor source_ce(const Tensor& category_logits, const std::vector<int>& labels);

// Mean entropy of softmax(category logits); log is clamped at 1e-12 so
// near-one-hot predictions stay finite.
Tensor target_entropy(const Tensor& category_logits);

// Mean cross-entropy of domain logits over the combined source+target batch.
Tensor ss_domain_ce(const Tensor& domain_logits, const std::vector<int>& domain_labels);

// l_total = alpha1 * (l_src + lambda * l_tgt) + alpha2 * l_ss
LossBreakdown multitask(double l_src, double l_tgt, double l_ss, const LossWeights& weights);

// Graph-level combination of the same formula. Null terms are treated as
// zero-weight and excluded from the recorded computation entirely, so an
// ablated branch contributes neither value nor gradient.
Tensor multitask_total(const Tensor& l_src, const Tensor* l_tgt, const Tensor* l_ss,
                       const LossWeights& weights);

// Baseline heads: category logits = relu(x) W_sup^T, domain logits =
// relu(x) W_ss^T on the shared extractor output.
std::pair<Tensor, Tensor> linear_head_predict(const Tensor& x_raw, const Tensor& w_sup,
                                              const Tensor& w_ss);

}  // namespace ssg
