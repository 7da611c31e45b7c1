#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "ssg/data.hpp"
#include "ssg/errors.hpp"

using namespace ssg;

namespace {

SyntheticSpec small_spec() {
    SyntheticSpec spec;
    spec.n_domains = 4;
    spec.n_classes = 4;
    spec.samples_per_class_per_domain = 50;
    spec.input_dim = 8;
    spec.seed = 7;
    return spec;
}

std::string temp_path(const char* name) {
    return std::string("/tmp/ssg_test_") + name + "_" + std::to_string(::getpid()) + ".csv";
}

std::vector<double> domain_class_mean(const Dataset& d, int domain, int cls) {
    std::vector<double> mean(d.feature_dim, 0.0);
    std::size_t count = 0;
    for (const Sample& s : d.samples) {
        if (s.domain != domain) continue;
        int label = s.label ? *s.label : d.eval_only_target_labels().at(s.id);
        if (label != cls) continue;
        for (std::size_t i = 0; i < d.feature_dim; ++i) mean[i] += s.features[i];
        ++count;
    }
    for (double& v : mean) v /= static_cast<double>(count);
    return mean;
}

}  // namespace

TEST_CASE("synthetic counts and labeling") {
    Dataset d = generate_synthetic(small_spec());
    CHECK(d.samples.size() == 4 * 4 * 50);
    CHECK(d.source_count() == 3 * 4 * 50);
    CHECK(d.target_count() == 200);
    CHECK(d.target_domain == 3);
    CHECK(d.eval_only_target_labels().size() == 200);
    for (const Sample& s : d.samples) {
        if (s.domain == d.target_domain) {
            CHECK(!s.label.has_value());
        } else {
            REQUIRE(s.label.has_value());
            CHECK(*s.label >= 0);
            CHECK(*s.label < 4);
        }
    }
}

TEST_CASE("synthetic determinism") {
    Dataset a = generate_synthetic(small_spec());
    Dataset b = generate_synthetic(small_spec());
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].id == b.samples[i].id);
        CHECK(a.samples[i].domain == b.samples[i].domain);
        CHECK(a.samples[i].label == b.samples[i].label);
        for (std::size_t j = 0; j < a.feature_dim; ++j) {
            CHECK(a.samples[i].features[j] == b.samples[i].features[j]);
        }
    }

    SyntheticSpec other = small_spec();
    other.seed = 8;
    Dataset c = generate_synthetic(other);
    bool any_diff = false;
    for (std::size_t j = 0; j < a.feature_dim; ++j) {
        if (a.samples[0].features[j] != c.samples[0].features[j]) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("zero transform makes all domains identically distributed") {
    SyntheticSpec spec = small_spec();
    Dataset d = generate_synthetic(spec, ShiftParams{0.0, 0.0});
    // per-domain class means coincide up to sampling noise; the underlying
    // shifted means are exactly equal, so cross-domain mean gaps shrink with
    // sample count while cross-class gaps stay large
    auto m00 = domain_class_mean(d, 0, 0);
    auto m10 = domain_class_mean(d, 1, 0);
    auto m01 = domain_class_mean(d, 0, 1);
    double cross_domain = 0.0, cross_class = 0.0;
    for (std::size_t i = 0; i < d.feature_dim; ++i) {
        cross_domain += (m00[i] - m10[i]) * (m00[i] - m10[i]);
        cross_class += (m00[i] - m01[i]) * (m00[i] - m01[i]);
    }
    CHECK(std::sqrt(cross_domain) < 1.0);
    CHECK(std::sqrt(cross_class) > 1.5);
}

TEST_CASE("medium shift separates class means across domains") {
    Dataset d = generate_synthetic(small_spec());
    double total = 0.0;
    int pairs = 0;
    for (int a = 0; a < d.n_domains; ++a) {
        for (int b = a + 1; b < d.n_domains; ++b) {
            for (int k = 0; k < d.n_classes; ++k) {
                auto ma = domain_class_mean(d, a, k);
                auto mb = domain_class_mean(d, b, k);
                double dist = 0.0;
                for (std::size_t i = 0; i < d.feature_dim; ++i) {
                    dist += (ma[i] - mb[i]) * (ma[i] - mb[i]);
                }
                total += std::sqrt(dist);
                ++pairs;
            }
        }
    }
    CHECK(total / pairs > 0.5);
}

TEST_CASE("feature file round trip is bit exact") {
    SyntheticSpec spec = small_spec();
    spec.samples_per_class_per_domain = 3;
    Dataset d = generate_synthetic(spec);
    const std::string path = temp_path("roundtrip");
    write_feature_file(path, d);
    Dataset r = load_feature_file(path);

    CHECK(r.n_domains == d.n_domains);
    CHECK(r.n_classes == d.n_classes);
    CHECK(r.feature_dim == d.feature_dim);
    CHECK(r.target_domain == d.target_domain);
    REQUIRE(r.samples.size() == d.samples.size());
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
        CHECK(r.samples[i].id == d.samples[i].id);
        CHECK(r.samples[i].domain == d.samples[i].domain);
        CHECK(r.samples[i].label == d.samples[i].label);
        for (std::size_t j = 0; j < d.feature_dim; ++j) {
            CHECK(r.samples[i].features[j] == d.samples[i].features[j]);
        }
    }

    // a second write produces identical bytes
    const std::string path2 = temp_path("roundtrip2");
    write_feature_file(path2, r);
    std::ifstream f1(path), f2(path2);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("header-only file loads as an empty dataset") {
    const std::string path = temp_path("empty");
    {
        std::ofstream out(path);
        out << "#ssg-features,version=1,n_domains=3,n_classes=2,dim=4\n";
        out << "id,domain,label,f0,f1,f2,f3\n";
    }
    Dataset d = load_feature_file(path);
    CHECK(d.samples.empty());
    CHECK(d.n_domains == 3);
    CHECK(d.n_classes == 2);
    CHECK(d.feature_dim == 4);
    CHECK(d.target_domain == -1);
    std::remove(path.c_str());
}

TEST_CASE("label -1 marks an unlabeled target row") {
    const std::string path = temp_path("sentinel");
    {
        std::ofstream out(path);
        out << "#ssg-features,version=1,n_domains=2,n_classes=2,dim=2\n";
        out << "id,domain,label,f0,f1\n";
        out << "0,0,1,0.5,0.25\n";
        out << "1,1,-1,1,2\n";
    }
    Dataset d = load_feature_file(path);
    REQUIRE(d.samples.size() == 2);
    CHECK(d.samples[0].label == 1);
    CHECK(!d.samples[1].label.has_value());
    CHECK(d.target_domain == 1);
    std::remove(path.c_str());
}

TEST_CASE("malformed rows fail with line numbers") {
    const std::string path = temp_path("bad");

    auto write_and_expect = [&](const std::string& row, const char* needle) {
        {
            std::ofstream out(path);
            out << "#ssg-features,version=1,n_domains=2,n_classes=2,dim=4\n";
            out << "id,domain,label,f0,f1,f2,f3\n";
            out << row << "\n";
        }
        try {
            load_feature_file(path);
            FAIL("expected ParseError for row: ", row);
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("line 3") != std::string::npos);
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };

    write_and_expect("0,0,1,1.0,2.0,3.0", "fields");          // 3 features under width 4
    write_and_expect("0,0,5,1.0,2.0,3.0,4.0", "label");       // label out of range
    write_and_expect("0,9,1,1.0,2.0,3.0,4.0", "domain");      // domain out of range
    write_and_expect("0,0,1,1.0,x,3.0,4.0", "float");         // malformed float
    std::remove(path.c_str());
}

TEST_CASE("batch partition arithmetic") {
    SyntheticSpec spec;
    spec.n_domains = 2;
    spec.n_classes = 2;
    spec.samples_per_class_per_domain = 25;  // 50 source + 50 target
    spec.input_dim = 4;
    spec.seed = 3;
    Dataset d = generate_synthetic(spec);
    REQUIRE(d.samples.size() == 100);

    BatchPlan plan;
    plan.batch_size = 32;
    plan.seed = 5;
    auto batches = make_batches(d, plan, 1);
    REQUIRE(batches.size() == 4);
    CHECK(batches[0].size() == 32);
    CHECK(batches[1].size() == 32);
    CHECK(batches[2].size() == 32);
    CHECK(batches[3].size() == 4);

    // partition: every sample exactly once
    std::set<std::size_t> seen;
    for (const Batch& b : batches) {
        for (std::size_t i : b.source) seen.insert(i);
        for (std::size_t i : b.target) seen.insert(i);
        CHECK(!b.source.empty());
    }
    CHECK(seen.size() == 100);
}

TEST_CASE("balanced data with 1:1 mixing splits batches evenly") {
    SyntheticSpec spec;
    spec.n_domains = 2;
    spec.n_classes = 2;
    spec.samples_per_class_per_domain = 25;
    spec.input_dim = 4;
    spec.seed = 3;
    Dataset d = generate_synthetic(spec);

    BatchPlan plan;
    plan.batch_size = 32;
    plan.source_fraction = 0.5;
    plan.seed = 9;
    for (std::uint64_t epoch = 0; epoch < 3; ++epoch) {
        for (const Batch& b : make_batches(d, plan, epoch)) {
            CHECK(std::abs(static_cast<long>(b.source.size()) -
                           static_cast<long>(b.target.size())) <= 1);
        }
    }
}

TEST_CASE("batching is deterministic per seed pair") {
    Dataset d = generate_synthetic(small_spec());
    BatchPlan plan;
    plan.batch_size = 16;
    plan.seed = 11;
    auto a = make_batches(d, plan, 2);
    auto b = make_batches(d, plan, 2);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].source == b[i].source);
        CHECK(a[i].target == b[i].target);
    }
    auto c = make_batches(d, plan, 3);
    bool differs = false;
    for (std::size_t i = 0; i < a.size() && !differs; ++i) {
        if (a[i].source != c[i].source) differs = true;
    }
    CHECK(differs);
}

TEST_CASE("make_batches rejects an empty dataset") {
    Dataset empty;
    empty.n_domains = 2;
    empty.n_classes = 2;
    CHECK_THROWS_AS(make_batches(empty, BatchPlan{}, 0), TrainingError);
}
