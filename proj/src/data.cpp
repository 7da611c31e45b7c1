#include "ssg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ssg/errors.hpp"

namespace ssg {

namespace {
constexpr double kClassMeanStd = 1.0;
constexpr double kNoiseStd = 1.0;
}  // namespace

std::size_t Dataset::source_count() const {
    std::size_t n = 0;
    for (const Sample& s : samples) n += s.label.has_value() ? 1 : 0;
    return n;
}

std::size_t Dataset::target_count() const { return samples.size() - source_count(); }

ShiftLevel parse_shift_level(const std::string& name) {
    if (name == "low") return ShiftLevel::low;
    if (name == "medium") return ShiftLevel::medium;
    if (name == "high") return ShiftLevel::high;
    throw ConfigError("unknown shift level '" + name + "' (expected low|medium|high)");
}

std::string to_string(ShiftLevel level) {
    switch (level) {
        case ShiftLevel::low: return "low";
        case ShiftLevel::medium: return "medium";
        case ShiftLevel::high: return "high";
    }
    return "medium";
}

ShiftParams shift_params(ShiftLevel level) {
    switch (level) {
        case ShiftLevel::low: return {0.02, 0.05};
        case ShiftLevel::medium: return {1.1, 0.5};
        case ShiftLevel::high: return {1.5, 1.2};
    }
    return {1.1, 0.5};
}

void SyntheticSpec::validate() const {
    if (n_domains < 2) throw ConfigError("synthetic data: n_domains must be >= 2");
    if (n_classes < 2) throw ConfigError("synthetic data: n_classes must be >= 2");
    if (samples_per_class_per_domain < 1) {
        throw ConfigError("synthetic data: samples_per_class_per_domain must be >= 1");
    }
    if (input_dim < 2) throw ConfigError("synthetic data: input_dim must be >= 2");
    if (target_domain >= n_domains) {
        throw ConfigError("synthetic data: target_domain out of range");
    }
}

namespace {

struct GivensRotation {
    std::size_t p, q;
    double cos_a, sin_a;
};

// Composition of random plane rotations; enough mixing for a desk-scale
// covariate shift without building a full orthogonal matrix.
std::vector<GivensRotation> random_rotation(std::size_t dim, double max_angle, Rng& rng) {
    std::vector<GivensRotation> rots;
    rots.reserve(dim);
    for (std::size_t g = 0; g < dim; ++g) {
        std::size_t p = rng.index(dim);
        std::size_t q = rng.index(dim - 1);
        if (q >= p) ++q;
        const double angle = max_angle * (2.0 * rng.uniform01() - 1.0);
        rots.push_back({p, q, std::cos(angle), std::sin(angle)});
    }
    return rots;
}

void apply_rotation(const std::vector<GivensRotation>& rots, std::vector<double>& v) {
    for (const GivensRotation& r : rots) {
        const double vp = v[r.p], vq = v[r.q];
        v[r.p] = r.cos_a * vp - r.sin_a * vq;
        v[r.q] = r.sin_a * vp + r.cos_a * vq;
    }
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
    return generate_synthetic(spec, shift_params(spec.shift_level));
}

Dataset generate_synthetic(const SyntheticSpec& spec, const ShiftParams& shift) {
    spec.validate();
    const std::size_t dim = spec.input_dim;
    const int target = spec.target_domain < 0 ? spec.n_domains - 1 : spec.target_domain;

    Rng base(spec.seed);
    Rng mean_rng = base.fork("class-means");
    Rng transform_rng = base.fork("domain-transforms");
    Rng noise_rng = base.fork("noise");

    std::vector<std::vector<double>> class_means(spec.n_classes, std::vector<double>(dim));
    for (auto& mean : class_means) {
        for (double& x : mean) x = mean_rng.normal(0.0, kClassMeanStd);
    }

    std::vector<std::vector<GivensRotation>> rotations;
    std::vector<std::vector<double>> translations;
    for (int j = 0; j < spec.n_domains; ++j) {
        rotations.push_back(random_rotation(dim, shift.rotation_angle, transform_rng));
        std::vector<double> t(dim);
        double norm = 0.0;
        for (double& x : t) {
            x = transform_rng.normal(0.0, 1.0);
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (double& x : t) x *= shift.translation_norm / (norm > 0.0 ? norm : 1.0);
        translations.push_back(std::move(t));
    }

    Dataset dataset;
    dataset.n_domains = spec.n_domains;
    dataset.n_classes = spec.n_classes;
    dataset.feature_dim = dim;
    dataset.target_domain = target;

    int next_id = 0;
    for (int j = 0; j < spec.n_domains; ++j) {
        for (int k = 0; k < spec.n_classes; ++k) {
            std::vector<double> shifted_mean = class_means[static_cast<std::size_t>(k)];
            apply_rotation(rotations[static_cast<std::size_t>(j)], shifted_mean);
            for (std::size_t i = 0; i < dim; ++i) {
                shifted_mean[i] += translations[static_cast<std::size_t>(j)][i];
            }
            for (int s = 0; s < spec.samples_per_class_per_domain; ++s) {
                Sample sample;
                sample.id = next_id++;
                sample.domain = j;
                sample.features.resize(dim);
                for (std::size_t i = 0; i < dim; ++i) {
                    sample.features[i] = shifted_mean[i] + noise_rng.normal(0.0, kNoiseStd);
                }
                if (j == target) {
                    dataset.set_eval_label(sample.id, k);
                } else {
                    sample.label = k;
                }
                dataset.samples.push_back(std::move(sample));
            }
        }
    }
    return dataset;
}

// --- feature files ---------------------------------------------------------

void write_feature_file(const std::string& path, const Dataset& dataset) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");

    out << "#ssg-features,version=1,n_domains=" << dataset.n_domains
        << ",n_classes=" << dataset.n_classes << ",dim=" << dataset.feature_dim << "\n";
    out << "id,domain,label";
    for (std::size_t i = 0; i < dataset.feature_dim; ++i) out << ",f" << i;
    out << "\n";

    char buf[40];
    for (const Sample& s : dataset.samples) {
        out << s.id << ',' << s.domain << ',' << (s.label ? *s.label : -1);
        for (double f : s.features) {
            std::snprintf(buf, sizeof(buf), "%.17g", f);
            out << ',' << buf;
        }
        out << "\n";
    }
    if (!out) throw ParseError("write failed for '" + path + "'");
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

long parse_int_field(const std::string& field, int line_no, const char* what) {
    char* end = nullptr;
    const long v = std::strtol(field.c_str(), &end, 10);
    if (end == field.c_str() || *end != '\0') {
        throw ParseError("line " + std::to_string(line_no) + ": malformed " + what + " '" +
                         field + "'");
    }
    return v;
}

double parse_double_field(const std::string& field, int line_no) {
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end == field.c_str() || *end != '\0') {
        throw ParseError("line " + std::to_string(line_no) + ": malformed float '" + field + "'");
    }
    return v;
}

}  // namespace

Dataset load_feature_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw ParseError("line 1: missing format header");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    Dataset dataset;
    {
        auto fields = split_csv(line);
        if (fields.size() != 5 || fields[0] != "#ssg-features") {
            throw ParseError("line 1: not an ssg feature file");
        }
        if (fields[1] != "version=1") throw ParseError("line 1: unsupported version");
        if (fields[2].rfind("n_domains=", 0) != 0 || fields[3].rfind("n_classes=", 0) != 0 ||
            fields[4].rfind("dim=", 0) != 0) {
            throw ParseError("line 1: malformed header fields");
        }
        dataset.n_domains = static_cast<int>(parse_int_field(fields[2].substr(10), 1, "n_domains"));
        dataset.n_classes = static_cast<int>(parse_int_field(fields[3].substr(10), 1, "n_classes"));
        const long dim = parse_int_field(fields[4].substr(4), 1, "dim");
        if (dim <= 0) throw ParseError("line 1: dim must be positive");
        if (dataset.n_domains < 1 || dataset.n_classes < 1) {
            throw ParseError("line 1: domain/class counts must be positive");
        }
        dataset.feature_dim = static_cast<std::size_t>(dim);
    }

    if (!std::getline(in, line)) throw ParseError("line 2: missing column header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    {
        std::ostringstream expected;
        expected << "id,domain,label";
        for (std::size_t i = 0; i < dataset.feature_dim; ++i) expected << ",f" << i;
        if (line != expected.str()) throw ParseError("line 2: column header mismatch");
    }

    int line_no = 2;
    int unlabeled_domain = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv(line);
        if (fields.size() != 3 + dataset.feature_dim) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(3 + dataset.feature_dim) + " fields, got " +
                             std::to_string(fields.size()));
        }
        Sample s;
        s.id = static_cast<int>(parse_int_field(fields[0], line_no, "id"));
        s.domain = static_cast<int>(parse_int_field(fields[1], line_no, "domain"));
        if (s.domain < 0 || s.domain >= dataset.n_domains) {
            throw ParseError("line " + std::to_string(line_no) + ": domain " +
                             std::to_string(s.domain) + " out of range [0," +
                             std::to_string(dataset.n_domains) + ")");
        }
        const long label = parse_int_field(fields[2], line_no, "label");
        if (label == -1) {
            if (unlabeled_domain >= 0 && unlabeled_domain != s.domain) {
                throw ParseError("line " + std::to_string(line_no) +
                                 ": unlabeled rows span domains " +
                                 std::to_string(unlabeled_domain) + " and " +
                                 std::to_string(s.domain));
            }
            unlabeled_domain = s.domain;
        } else if (label < 0 || label >= dataset.n_classes) {
            throw ParseError("line " + std::to_string(line_no) + ": label " +
                             std::to_string(label) + " out of range [0," +
                             std::to_string(dataset.n_classes) + ")");
        } else {
            s.label = static_cast<int>(label);
        }
        s.features.resize(dataset.feature_dim);
        for (std::size_t i = 0; i < dataset.feature_dim; ++i) {
            s.features[i] = parse_double_field(fields[3 + i], line_no);
        }
        dataset.samples.push_back(std::move(s));
    }
    dataset.target_domain = unlabeled_domain;
    return dataset;
}

// --- batching ---------------------------------------------------------------

std::vector<Batch> make_batches(const Dataset& dataset, const BatchPlan& plan,
                                std::uint64_t epoch_seed) {
    if (dataset.samples.empty()) throw TrainingError("make_batches: empty dataset");
    if (plan.batch_size == 0) throw ConfigError("make_batches: batch_size must be positive");

    std::vector<std::size_t> source_idx, target_idx;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        (dataset.samples[i].label ? source_idx : target_idx).push_back(i);
    }

    Rng rng = Rng(plan.seed).fork("epoch:" + std::to_string(epoch_seed));
    rng.shuffle(source_idx);
    rng.shuffle(target_idx);

    const std::size_t total = dataset.samples.size();
    const double fraction =
        plan.source_fraction >= 0.0
            ? plan.source_fraction
            : static_cast<double>(source_idx.size()) / static_cast<double>(total);

    // proportional merge: at each position place a source sample when the
    // running source count lags its quota
    std::vector<std::size_t> order;
    order.reserve(total);
    std::size_t si = 0, ti = 0;
    while (si < source_idx.size() || ti < target_idx.size()) {
        const double placed = static_cast<double>(si + ti) + 1.0;
        const bool want_source = static_cast<double>(si) < fraction * placed;
        if (si < source_idx.size() && (want_source || ti >= target_idx.size())) {
            order.push_back(source_idx[si++]);
        } else {
            order.push_back(target_idx[ti++]);
        }
    }

    std::vector<Batch> batches;
    for (std::size_t begin = 0; begin < total; begin += plan.batch_size) {
        const std::size_t end = std::min(begin + plan.batch_size, total);
        Batch batch;
        for (std::size_t i = begin; i < end; ++i) {
            (dataset.samples[order[i]].label ? batch.source : batch.target).push_back(order[i]);
        }
        batches.push_back(std::move(batch));
    }

    // every batch must carry at least one source sample
    for (std::size_t b = 0; b < batches.size(); ++b) {
        if (!batches[b].source.empty()) continue;
        std::size_t donor = batches.size();
        for (std::size_t d = 0; d < batches.size(); ++d) {
            if (batches[d].source.size() >= 2 &&
                (donor == batches.size() ||
                 batches[d].source.size() > batches[donor].source.size())) {
                donor = d;
            }
        }
        if (donor == batches.size() || batches[b].target.empty()) {
            throw TrainingError("make_batches: cannot place a source sample in every batch");
        }
        batches[b].source.push_back(batches[donor].source.back());
        batches[donor].source.pop_back();
        batches[donor].target.push_back(batches[b].target.back());
        batches[b].target.pop_back();
    }
    return batches;
}

}  // namespace ssg
