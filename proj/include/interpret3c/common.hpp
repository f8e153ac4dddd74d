#pragma once

#include <cstdint>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace i3c {

// Error hierarchy. Names follow the operation contracts; everything derives
// from i3c::Error so callers can catch the whole family at stage boundaries.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define I3C_DEFINE_ERROR(NAME)                                                 \
    struct NAME : Error {                                                      \
        using Error::Error;                                                    \
    }

I3C_DEFINE_ERROR(MalformedRow);
I3C_DEFINE_ERROR(EmptyLog);
I3C_DEFINE_ERROR(OutOfRange);
I3C_DEFINE_ERROR(UnknownFeature);
I3C_DEFINE_ERROR(ShapeMismatch);
I3C_DEFINE_ERROR(InvalidDraw);
I3C_DEFINE_ERROR(LabelMismatch);
I3C_DEFINE_ERROR(NonFinite);
I3C_DEFINE_ERROR(AlignmentError);
I3C_DEFINE_ERROR(EmptyActiveSet);
I3C_DEFINE_ERROR(DegenerateBandwidth);
I3C_DEFINE_ERROR(ConvergenceFailure);
I3C_DEFINE_ERROR(EmptyCluster);
I3C_DEFINE_ERROR(InvalidSpec);
I3C_DEFINE_ERROR(ConfigError);
I3C_DEFINE_ERROR(IoError);
I3C_DEFINE_ERROR(StaleArtifact);

#undef I3C_DEFINE_ERROR

uint64_t splitmix64(uint64_t x);
uint64_t fnv1a64(std::string_view bytes);

// Deterministic PRNG (xoshiro256**). The standard <random> distributions are
// implementation-defined, so every draw here is derived from raw 64-bit output
// to keep artifacts reproducible across toolchains.
class Rng {
  public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();
    // strictly inside (0,1)
    double uniform();
    double uniform(double lo, double hi);
    size_t uniform_index(size_t n);
    double gaussian(); // Box-Muller, two draws per call
    long poisson(double mean);
    bool bernoulli(double p);

    // Independent stream for (seed, index) pairs, e.g. per-student generation.
    static Rng derive(uint64_t seed, uint64_t index);

  private:
    uint64_t s_[4];
};

// Runs fn(i) for i in [0, n). Chunked contiguous ranges so outputs stay
// write-disjoint; results must not depend on the thread count.
void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn);

// 17 significant digits: lossless decimal round-trip for IEEE doubles.
std::string format_double(double v);
double parse_double(std::string_view text, const std::string& what);
long parse_long(std::string_view text, const std::string& what);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

} // namespace i3c
