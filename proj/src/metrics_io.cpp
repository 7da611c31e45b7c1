#include "ssg/metrics_io.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "ssg/errors.hpp"

namespace ssg {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string format17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double require_number(const ordered_json& doc, const char* key, int line_no) {
    if (!doc.contains(key) || !doc[key].is_number()) {
        throw ParseError("line " + std::to_string(line_no) + ": missing numeric field '" + key +
                         "'");
    }
    return doc[key].get<double>();
}

}  // namespace

void write_metrics_jsonl(const std::string& path, const std::vector<MetricsRecord>& metrics) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    for (const MetricsRecord& r : metrics) {
        ordered_json doc;
        doc["epoch"] = r.epoch;
        doc["l_src"] = r.l_src;
        doc["l_tgt"] = r.l_tgt;
        doc["l_ss"] = r.l_ss;
        doc["l_total"] = r.l_total;
        doc["source_acc"] = r.source_acc;
        doc["domain_acc"] = r.domain_acc;
        doc["target_acc"] = r.target_acc;
        out << doc.dump() << "\n";
    }
    if (!out) throw ParseError("write failed for '" + path + "'");
}

std::vector<MetricsRecord> read_metrics_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::vector<MetricsRecord> metrics;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json doc = ordered_json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) {
            throw ParseError("line " + std::to_string(line_no) + ": malformed metrics record");
        }
        MetricsRecord r;
        r.epoch = static_cast<std::size_t>(require_number(doc, "epoch", line_no));
        r.l_src = require_number(doc, "l_src", line_no);
        r.l_tgt = require_number(doc, "l_tgt", line_no);
        r.l_ss = require_number(doc, "l_ss", line_no);
        r.l_total = require_number(doc, "l_total", line_no);
        r.source_acc = require_number(doc, "source_acc", line_no);
        r.domain_acc = require_number(doc, "domain_acc", line_no);
        r.target_acc = require_number(doc, "target_acc", line_no);
        metrics.push_back(r);
    }
    return metrics;
}

void emit_curves(const std::string& jsonl_path, const std::string& csv_path) {
    std::vector<MetricsRecord> metrics = read_metrics_jsonl(jsonl_path);
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + csv_path + "' for writing");
    out << "epoch,l_src,l_tgt,l_ss,l_total,target_acc,domain_acc\n";
    for (const MetricsRecord& r : metrics) {
        out << r.epoch << ',' << format17(r.l_src) << ',' << format17(r.l_tgt) << ','
            << format17(r.l_ss) << ',' << format17(r.l_total) << ',' << format17(r.target_acc)
            << ',' << format17(r.domain_acc) << "\n";
    }
    if (!out) throw ParseError("write failed for '" + csv_path + "'");
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows,
                        std::span<const std::uint64_t> seeds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    out << "variant,mean,std,seeds\n";
    std::string seed_list;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (i) seed_list += ';';
        seed_list += std::to_string(seeds[i]);
    }
    for (const AblationRow& row : rows) {
        out << row.label << ',' << format17(row.mean_acc) << ',' << format17(row.std_acc) << ','
            << seed_list << "\n";
    }
    if (!out) throw ParseError("write failed for '" + path + "'");
}

void write_sweep_csv(const std::string& path, const std::vector<MaskSweepResult>& results) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    out << "ratio,epoch,l_ss,domain_acc,target_acc\n";
    for (const MaskSweepResult& sweep : results) {
        for (const MetricsRecord& r : sweep.metrics) {
            out << format17(sweep.ratio) << ',' << r.epoch << ',' << format17(r.l_ss) << ','
                << format17(r.domain_acc) << ',' << format17(r.target_acc) << "\n";
        }
    }
    if (!out) throw ParseError("write failed for '" + path + "'");
}

}  // namespace ssg
