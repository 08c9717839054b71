#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace flarekit {

// FNV-1a 64-bit, used for stage traces and run records.
class Fnv64 {
public:
    void update(const void* data, size_t n) {
        const auto* p = static_cast<const uint8_t*>(data);
        for (size_t i = 0; i < n; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ull;
        }
    }
    uint64_t value() const { return state_; }
    std::string hex() const;

private:
    uint64_t state_ = 0xcbf29ce484222325ull;
};

uint64_t fnv64(const void* data, size_t n);
std::string fnv64_hex(const void* data, size_t n);

// splitmix64-based generator. Implementation-defined std distributions are
// avoided so streams stay identical across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi_inclusive) {
        return lo + int(next_u64() % uint64_t(hi_inclusive - lo + 1));
    }

    // Box-Muller; one value per call, the pair partner is cached.
    double normal();

    // Derive an independent stream (e.g. per image index).
    Rng fork(uint64_t salt) {
        Rng r(state_ ^ (salt * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull));
        r.next_u64();
        return r;
    }

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Chunked parallel map over [0, n). jobs <= 1 runs inline. Results must be
// written to per-index slots by the caller; ordering of writes per index is
// therefore deterministic regardless of the thread count.
void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn);

int default_jobs();

// p in [0,100]; linear interpolation between order statistics.
float percentile(std::vector<float> values, double p);

inline int reflect101(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i = std::abs(i) % period;
    return i < n ? i : period - i;
}

inline float clampf(float v, float lo, float hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
std::vector<uint8_t> read_binary_file(const std::string& path);
void write_binary_file(const std::string& path, const void* data, size_t n);

} // namespace flarekit
