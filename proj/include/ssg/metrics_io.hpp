#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ssg/trainer.hpp"

namespace ssg {

// One JSON object per line, keys in fixed order; byte-identical for identical
// metric sequences.
void write_metrics_jsonl(const std::string& path, const std::vector<MetricsRecord>& metrics);
std::vector<MetricsRecord> read_metrics_jsonl(const std::string& path);

// Loss-curve CSV for external plotting:
// epoch,l_src,l_tgt,l_ss,l_total,target_acc,domain_acc
// Values carry 17 significant digits.
void emit_curves(const std::string& jsonl_path, const std::string& csv_path);

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows,
                        std::span<const std::uint64_t> seeds);

// ratio,epoch,l_ss,domain_acc,target_acc; one row per (ratio, epoch).
void write_sweep_csv(const std::string& path, const std::vector<MaskSweepResult>& results);

}  // namespace ssg
