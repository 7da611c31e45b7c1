#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ssg/rng.hpp"

namespace ssg {

// One image stand-in. Target-domain samples carry no label at training time;
// their true labels live in Dataset::eval-only storage.
struct Sample {
    int id = 0;
    std::vector<double> features;
    int domain = 0;
    std::optional<int> label;  // empty = unlabeled target
};

struct Dataset {
    int n_domains = 0;
    int n_classes = 0;
    std::size_t feature_dim = 0;
    int target_domain = -1;  // -1 when the file declared no unlabeled domain
    std::vector<Sample> samples;

    std::size_t source_count() const;
    std::size_t target_count() const;

    // Held-out target labels, keyed by sample id. Only evaluation reads this;
    // nothing on the training path may touch it.
    const std::unordered_map<int, int>& eval_only_target_labels() const { return eval_labels_; }
    void set_eval_label(int sample_id, int label) { eval_labels_[sample_id] = label; }

  private:
    std::unordered_map<int, int> eval_labels_;
};

enum class ShiftLevel { low, medium, high };

ShiftLevel parse_shift_level(const std::string& name);
std::string to_string(ShiftLevel level);

// Rotation angle and translation norm applied to class means per domain.
struct ShiftParams {
    double rotation_angle = 0.0;
    double translation_norm = 0.0;
};

ShiftParams shift_params(ShiftLevel level);

struct SyntheticSpec {
    int n_domains = 4;
    int n_classes = 4;
    int samples_per_class_per_domain = 50;
    std::size_t input_dim = 16;
    ShiftLevel shift_level = ShiftLevel::medium;
    std::uint64_t seed = 0;
    int target_domain = -1;  // -1 = last domain
    void validate() const;
};

// Class k gets a base mean; domain j rotates and translates all class means,
// then samples isotropic Gaussian points around them. Deterministic per seed.
Dataset generate_synthetic(const SyntheticSpec& spec);
Dataset generate_synthetic(const SyntheticSpec& spec, const ShiftParams& shift);

// Feature file round trip. Writes the training view: target rows get label -1
// and held-out labels are never serialized.
void write_feature_file(const std::string& path, const Dataset& dataset);
Dataset load_feature_file(const std::string& path);

struct BatchPlan {
    std::size_t batch_size = 32;
    // Desired fraction of source samples per batch; negative = match the
    // dataset composition.
    double source_fraction = -1.0;
    std::uint64_t seed = 0;
};

// Index lists into Dataset::samples.
struct Batch {
    std::vector<std::size_t> source;
    std::vector<std::size_t> target;
    std::size_t size() const { return source.size() + target.size(); }
};

// Deterministic shuffle per (plan.seed, epoch_seed); batches partition the
// dataset and every batch carries at least one source sample.
std::vector<Batch> make_batches(const Dataset& dataset, const BatchPlan& plan,
                                std::uint64_t epoch_seed);

}  // namespace ssg
