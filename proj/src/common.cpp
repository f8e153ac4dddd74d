#include "interpret3c/common.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <thread>

namespace i3c {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t fnv1a64(std::string_view bytes) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {
inline uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
} // namespace

Rng::Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& s : s_) {
        x = splitmix64(x);
        s = x;
    }
}

uint64_t Rng::next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() {
    // 53-bit mantissa shifted into (0,1): never returns an endpoint.
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

size_t Rng::uniform_index(size_t n) {
    if (n == 0) throw OutOfRange("uniform_index: empty range");
    size_t i = static_cast<size_t>(uniform() * static_cast<double>(n));
    return std::min(i, n - 1);
}

double Rng::gaussian() {
    double u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

long Rng::poisson(double mean) {
    if (mean < 0) throw InvalidSpec("poisson: negative mean");
    long total = 0;
    // Knuth's product method, chunked so exp() stays above underflow.
    while (mean > 0) {
        double chunk = std::min(mean, 400.0);
        mean -= chunk;
        const double limit = std::exp(-chunk);
        double p = 1.0;
        long k = 0;
        do {
            ++k;
            p *= uniform();
        } while (p > limit);
        total += k - 1;
    }
    return total;
}

bool Rng::bernoulli(double p) { return uniform() < p; }

Rng Rng::derive(uint64_t seed, uint64_t index) {
    return Rng(splitmix64(seed) ^ splitmix64(index + 0x9e3779b97f4a7c15ULL));
}

void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn) {
    if (threads < 1) threads = 1;
    size_t workers = std::min<size_t>(static_cast<size_t>(threads), n);
    if (workers <= 1 || n < 2) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    size_t chunk = (n + workers - 1) / workers;
    for (size_t w = 0; w < workers; ++w) {
        size_t lo = w * chunk;
        size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(std::string_view text, const std::string& what) {
    std::string s = trim(text);
    if (s.empty()) throw MalformedRow(what + ": empty numeric field");
    errno = 0;
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE)
        throw MalformedRow(what + ": bad number '" + s + "'");
    return v;
}

long parse_long(std::string_view text, const std::string& what) {
    std::string s = trim(text);
    if (s.empty()) throw MalformedRow(what + ": empty integer field");
    errno = 0;
    char* end = nullptr;
    long v = std::strtol(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size() || errno == ERANGE)
        throw MalformedRow(what + ": bad integer '" + s + "'");
    return v;
}

std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    size_t start = 0;
    for (size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.emplace_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

} // namespace i3c
