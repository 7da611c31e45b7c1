#include "ssg/objectives.hpp"

#include <cmath>

#include "ssg/errors.hpp"

namespace ssg {

void LossWeights::validate() const {
    if (alpha1 < 0.0 || alpha2 < 0.0 || lambda < 0.0) {
        throw ConfigError("loss weights must be non-negative");
    }
}

Tensor source_ce(const Tensor& category_logits, const std::vector<int>& labels) {
    return cross_entropy_rows(category_logits, labels);
}

Tensor target_entropy(const Tensor& category_logits) {
    if (category_logits.rank() != 2 || category_logits.rows() == 0) {
        throw DimensionError("target_entropy: expected non-empty rank-2 logits, got " +
                             shape_string(category_logits.shape()));
    }
    const double m = static_cast<double>(category_logits.rows());
    Tensor probs = softmax_rows(category_logits);
    return scale(sum(mul(probs, log(probs))), -1.0 / m);
}

Tensor ss_domain_ce(const Tensor& domain_logits, const std::vector<int>& domain_labels) {
    return cross_entropy_rows(domain_logits, domain_labels);
}

LossBreakdown multitask(double l_src, double l_tgt, double l_ss, const LossWeights& weights) {
    weights.validate();
    if (!std::isfinite(l_src) || !std::isfinite(l_tgt) || !std::isfinite(l_ss)) {
        throw TrainingError("multitask: non-finite loss component");
    }
    LossBreakdown b;
    b.l_src = l_src;
    b.l_tgt = l_tgt;
    b.l_ss = l_ss;
    b.l_total = weights.alpha1 * (l_src + weights.lambda * l_tgt) + weights.alpha2 * l_ss;
    return b;
}

Tensor multitask_total(const Tensor& l_src, const Tensor* l_tgt, const Tensor* l_ss,
                       const LossWeights& weights) {
    weights.validate();
    if (!std::isfinite(l_src.scalar_value())) throw TrainingError("multitask: non-finite l_src");
    Tensor supervised = l_src;
    if (l_tgt != nullptr && weights.lambda != 0.0) {
        if (!std::isfinite(l_tgt->scalar_value())) {
            throw TrainingError("multitask: non-finite l_tgt");
        }
        supervised = add(supervised, scale(*l_tgt, weights.lambda));
    }
    Tensor total = scale(supervised, weights.alpha1);
    if (l_ss != nullptr && weights.alpha2 != 0.0) {
        if (!std::isfinite(l_ss->scalar_value())) {
            throw TrainingError("multitask: non-finite l_ss");
        }
        total = add(total, scale(*l_ss, weights.alpha2));
    }
    return total;
}

std::pair<Tensor, Tensor> linear_head_predict(const Tensor& x_raw, const Tensor& w_sup,
                                              const Tensor& w_ss) {
    if (x_raw.cols() != w_sup.cols() || x_raw.cols() != w_ss.cols()) {
        throw DimensionError("linear_head_predict: feature width mismatch " +
                             shape_string(x_raw.shape()) + " vs " + shape_string(w_sup.shape()) +
                             " / " + shape_string(w_ss.shape()));
    }
    Tensor x = relu(x_raw);
    return {matmul(x, transpose(w_sup)), matmul(x, transpose(w_ss))};
}

}  // namespace ssg
