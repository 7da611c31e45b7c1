#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace ssg {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t hash_tag(std::string_view tag);  // FNV-1a

// Seeded random stream. mt19937_64 is fully specified by the standard; the
// distributions are hand-rolled because the std ones are
// implementation-defined and we need reproducible runs.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64() { return engine_(); }

    double uniform01();                           // [0, 1)
    double normal();                              // standard normal, Box-Muller
    double normal(double mean, double stddev);
    bool bernoulli(double p);                     // true with probability p
    std::size_t index(std::size_t n);             // uniform in [0, n)

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::swap(v[i], v[index(i + 1)]);
        }
    }

    // Independent sub-stream derived from the construction seed. Forks with
    // the same tag are identical no matter how much of this stream was
    // consumed.
    Rng fork(std::string_view tag) const;

  private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ssg
