#include "ssg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ssg/errors.hpp"

namespace ssg {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const std::set<std::string> kTopLevelKeys = {
    "variant",     "n_domains",  "n_classes",      "embed_dim",     "feature_dim",
    "gcn_layers",  "sigma",      "add_self_loops", "alpha1",        "alpha2",
    "lambda",      "mask_ratio", "s_val",          "lr",            "epochs",
    "batch_size",  "seed",       "data",           "drop_tgt_loss", "drop_ss_loss",
    "extractor_hidden"};

const std::set<std::string> kDataKeys = {"samples_per_class_per_domain", "input_dim",
                                         "shift_level", "seed", "target_domain"};

double as_number(const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError("config: key '" + key + "' must be a number");
    return v.get<double>();
}

long as_integer(const json& v, const std::string& key) {
    if (!v.is_number_integer() && !v.is_number_unsigned()) {
        throw ConfigError("config: key '" + key + "' must be an integer");
    }
    return v.get<long>();
}

std::size_t as_positive(const json& v, const std::string& key) {
    const long n = as_integer(v, key);
    if (n < 1) throw ConfigError("config: key '" + key + "' must be >= 1");
    return static_cast<std::size_t>(n);
}

bool as_bool(const json& v, const std::string& key) {
    if (!v.is_boolean()) throw ConfigError("config: key '" + key + "' must be a boolean");
    return v.get<bool>();
}

std::string as_string(const json& v, const std::string& key) {
    if (!v.is_string()) throw ConfigError("config: key '" + key + "' must be a string");
    return v.get<std::string>();
}

// Override values are parsed as JSON scalars when they look like one, and
// kept as strings otherwise, so `--set lr=0.01` and `--set variant=linear`
// both work.
json parse_override_value(const std::string& text) {
    json parsed = json::parse(text, nullptr, false);
    if (!parsed.is_discarded() && !parsed.is_object() && !parsed.is_array()) return parsed;
    return json(text);
}

void apply_override(json& doc, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("config: override '" + spec + "' is not of the form key=value");
    }
    const std::string key = spec.substr(0, eq);
    const json value = parse_override_value(spec.substr(eq + 1));
    const auto dot = key.find('.');
    if (dot == std::string::npos) {
        doc[key] = value;
        return;
    }
    const std::string head = key.substr(0, dot);
    const std::string tail = key.substr(dot + 1);
    if (head != "data") throw ConfigError("config: unknown override path '" + key + "'");
    if (!doc.contains("data") || !doc["data"].is_object()) doc["data"] = json::object();
    doc["data"][tail] = value;
}

ExperimentConfig interpret(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
        (void)value;
        if (!kTopLevelKeys.count(key)) throw ConfigError("config: unknown key '" + key + "'");
    }

    ExperimentConfig config;
    if (doc.contains("variant")) {
        config.variant = parse_model_variant(as_string(doc["variant"], "variant"));
    }
    if (doc.contains("n_domains")) config.n_domains = as_positive(doc["n_domains"], "n_domains");
    if (doc.contains("n_classes")) config.n_classes = as_positive(doc["n_classes"], "n_classes");
    if (doc.contains("embed_dim")) config.embed_dim = as_positive(doc["embed_dim"], "embed_dim");
    if (doc.contains("feature_dim")) {
        config.feature_dim = as_positive(doc["feature_dim"], "feature_dim");
    }
    if (doc.contains("gcn_layers")) {
        config.gcn_layers = as_positive(doc["gcn_layers"], "gcn_layers");
    }
    if (doc.contains("extractor_hidden")) {
        config.extractor_hidden = as_positive(doc["extractor_hidden"], "extractor_hidden");
    }
    if (doc.contains("sigma")) config.sigma = as_number(doc["sigma"], "sigma");
    if (doc.contains("add_self_loops")) {
        config.add_self_loops = as_bool(doc["add_self_loops"], "add_self_loops");
    }
    if (doc.contains("alpha1")) config.weights.alpha1 = as_number(doc["alpha1"], "alpha1");
    if (doc.contains("alpha2")) config.weights.alpha2 = as_number(doc["alpha2"], "alpha2");
    if (doc.contains("lambda")) config.weights.lambda = as_number(doc["lambda"], "lambda");
    if (doc.contains("mask_ratio")) {
        config.mask_ratio = as_number(doc["mask_ratio"], "mask_ratio");
    }
    if (doc.contains("s_val")) config.s_val = as_number(doc["s_val"], "s_val");
    if (doc.contains("lr")) config.lr = as_number(doc["lr"], "lr");
    if (doc.contains("epochs")) config.epochs = as_positive(doc["epochs"], "epochs");
    if (doc.contains("batch_size")) {
        config.batch_size = as_positive(doc["batch_size"], "batch_size");
    }
    if (doc.contains("seed")) {
        const long seed = as_integer(doc["seed"], "seed");
        if (seed < 0) throw ConfigError("config: key 'seed' must be >= 0");
        config.seed = static_cast<std::uint64_t>(seed);
    }
    if (doc.contains("drop_tgt_loss")) {
        config.drop_tgt_loss = as_bool(doc["drop_tgt_loss"], "drop_tgt_loss");
    }
    if (doc.contains("drop_ss_loss")) {
        config.drop_ss_loss = as_bool(doc["drop_ss_loss"], "drop_ss_loss");
    }

    if (doc.contains("data")) {
        const json& data = doc["data"];
        if (data.is_string()) {
            config.data.kind = DataSourceConfig::Kind::file;
            config.data.path = data.get<std::string>();
        } else if (data.is_object()) {
            for (const auto& [key, value] : data.items()) {
                (void)value;
                if (!kDataKeys.count(key)) {
                    throw ConfigError("config: unknown key 'data." + key + "'");
                }
            }
            config.data.kind = DataSourceConfig::Kind::synthetic;
            SyntheticSpec& spec = config.data.synthetic;
            if (data.contains("samples_per_class_per_domain")) {
                spec.samples_per_class_per_domain = static_cast<int>(
                    as_positive(data["samples_per_class_per_domain"],
                                "data.samples_per_class_per_domain"));
            }
            if (data.contains("input_dim")) {
                spec.input_dim = as_positive(data["input_dim"], "data.input_dim");
            }
            if (data.contains("shift_level")) {
                spec.shift_level =
                    parse_shift_level(as_string(data["shift_level"], "data.shift_level"));
            }
            if (data.contains("seed")) {
                const long seed = as_integer(data["seed"], "data.seed");
                if (seed < 0) throw ConfigError("config: key 'data.seed' must be >= 0");
                spec.seed = static_cast<std::uint64_t>(seed);
            }
            if (data.contains("target_domain")) {
                spec.target_domain =
                    static_cast<int>(as_integer(data["target_domain"], "data.target_domain"));
            }
        } else {
            throw ConfigError("config: key 'data' must be a file path or an object");
        }
    }

    // synthetic specs mirror the model's domain/class counts
    config.data.synthetic.n_domains = static_cast<int>(config.n_domains);
    config.data.synthetic.n_classes = static_cast<int>(config.n_classes);

    config.validate();
    return config;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& json_text,
                                   const std::vector<std::string>& overrides) {
    json doc = json::parse(json_text, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("config: invalid JSON");
    for (const std::string& spec : overrides) apply_override(doc, spec);
    return interpret(doc);
}

ExperimentConfig parse_config_file(const std::string& path,
                                   const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str(), overrides);
}

std::string resolved_config_json(const ExperimentConfig& config) {
    ordered_json doc;
    doc["variant"] = to_string(config.variant);
    doc["n_domains"] = config.n_domains;
    doc["n_classes"] = config.n_classes;
    doc["embed_dim"] = config.embed_dim;
    doc["feature_dim"] = config.feature_dim;
    doc["gcn_layers"] = config.gcn_layers;
    doc["extractor_hidden"] = config.extractor_hidden;
    doc["sigma"] = config.sigma;
    doc["add_self_loops"] = config.add_self_loops;
    doc["alpha1"] = config.weights.alpha1;
    doc["alpha2"] = config.weights.alpha2;
    doc["lambda"] = config.weights.lambda;
    doc["mask_ratio"] = config.mask_ratio;
    doc["s_val"] = config.s_val;
    doc["lr"] = config.lr;
    doc["epochs"] = config.epochs;
    doc["batch_size"] = config.batch_size;
    doc["seed"] = config.seed;
    doc["drop_tgt_loss"] = config.drop_tgt_loss;
    doc["drop_ss_loss"] = config.drop_ss_loss;
    if (config.data.kind == DataSourceConfig::Kind::file) {
        doc["data"] = config.data.path;
    } else {
        ordered_json data;
        data["samples_per_class_per_domain"] = config.data.synthetic.samples_per_class_per_domain;
        data["input_dim"] = config.data.synthetic.input_dim;
        data["shift_level"] = to_string(config.data.synthetic.shift_level);
        data["seed"] = config.data.synthetic.seed;
        data["target_domain"] = config.data.synthetic.target_domain;
        doc["data"] = std::move(data);
    }
    return doc.dump(2) + "\n";
}

}  // namespace ssg
