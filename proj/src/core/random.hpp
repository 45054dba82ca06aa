#pragma once
// Seeded random source with hand-rolled distributions so that streams are
// bit-identical across standard libraries and platforms (std::mt19937_64 is
// pinned by the standard; std::normal_distribution et al. are not).

#include <cmath>
#include <cstdint>
#include <cstring>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <random>

namespace coch {

class RandomSource {
public:
    explicit RandomSource(uint64_t seed = 0) : eng_(seed) {}

    uint64_t raw() { return eng_(); }

    // uniform in [0, 1) with 53 random bits
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // unbiased integer in [0, n)
    uint64_t below(uint64_t n) {
        if (n == 0) throw std::invalid_argument("below(0)");
        const uint64_t lim = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do { x = eng_(); } while (x >= lim);
        return x % n;
    }

    int range(int lo, int hi) {  // [lo, hi)
        if (hi <= lo) throw std::invalid_argument("empty range");
        return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo)));
    }

    // Box-Muller, cached second value
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01(), u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 2.0 * M_PI * u2;
        spare_ = r * std::sin(th);
        have_spare_ = true;
        return r * std::cos(th);
    }

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    template <typename T>
    void fill_normal(std::vector<T>& v, double mu, double sigma) {
        for (auto& x : v) x = static_cast<T>(normal(mu, sigma));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // mt19937_64 stream state round-trips exactly through operator<< / >>;
    // the cached Box-Muller value travels as its bit pattern.
    std::string serialize() const {
        std::ostringstream os;
        os << eng_ << " " << (have_spare_ ? 1 : 0);
        if (have_spare_) {
            uint64_t bits;
            static_assert(sizeof(bits) == sizeof(spare_));
            std::memcpy(&bits, &spare_, sizeof(bits));
            os << " " << bits;
        }
        return os.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream is(s);
        int flag = 0;
        is >> eng_ >> flag;
        have_spare_ = flag != 0;
        spare_ = 0.0;
        if (have_spare_) {
            uint64_t bits = 0;
            is >> bits;
            std::memcpy(&spare_, &bits, sizeof(bits));
        }
        if (is.fail()) throw std::runtime_error("bad random-source state string");
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace coch
