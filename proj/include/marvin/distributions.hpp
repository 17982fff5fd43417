#pragma once

// Distributions for the hidden per-node coverage requirement M_v.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "marvin/common.hpp"

namespace marvin {

struct MultiPassDistribution {
    enum class Kind { Uniform, TruncGaussian, TwoPoint, Constant, ExponentialShifted };

    Kind kind = Kind::Uniform;
    double a = 1;  // Uniform/TruncGaussian lower bound, TwoPoint first value, Constant value
    double b = 3;  // Uniform/TruncGaussian upper bound, TwoPoint second value
    double mean = 2;
    double stddev = 1;

    static MultiPassDistribution uniform(int lo, int hi) { return {Kind::Uniform, double(lo), double(hi)}; }
    static MultiPassDistribution trunc_gaussian(int lo, int hi, double mean, double sd) {
        return {Kind::TruncGaussian, double(lo), double(hi), mean, sd};
    }
    static MultiPassDistribution two_point(int x, int y) { return {Kind::TwoPoint, double(x), double(y)}; }
    static MultiPassDistribution constant(int k) { return {Kind::Constant, double(k), double(k)}; }
    static MultiPassDistribution exponential_shifted(double mean) {
        return {Kind::ExponentialShifted, 1, 1, mean, 0};
    }

    void validate() const {
        auto bad = [&](const std::string& why) { throw Error("invalid multi-pass distribution " + name() + ": " + why); };
        switch (kind) {
            case Kind::Uniform:
            case Kind::TruncGaussian:
                if (a > b) bad("lower bound exceeds upper bound");
                if (a < 1) bad("lower bound must be >= 1");
                if (kind == Kind::TruncGaussian && !(stddev > 0)) bad("stddev must be positive");
                break;
            case Kind::TwoPoint:
                if (a < 1 || b < 1) bad("values must be >= 1");
                break;
            case Kind::Constant:
                if (a < 1) bad("value must be >= 1");
                break;
            case Kind::ExponentialShifted:
                if (!(mean >= 1)) bad("mean must be >= 1");
                break;
        }
    }

    /// Integer draw >= 1.
    int sample(Rng& rng) const {
        switch (kind) {
            case Kind::Uniform:
                return std::uniform_int_distribution<int>(int(a), int(b))(rng);
            case Kind::TruncGaussian: {
                const double x = std::normal_distribution<double>(mean, stddev)(rng);
                return static_cast<int>(std::clamp(std::round(x), a, b));
            }
            case Kind::TwoPoint:
                return uniform01(rng) < 0.5 ? int(a) : int(b);
            case Kind::Constant:
                return int(a);
            case Kind::ExponentialShifted: {
                // 1 + stochastic rounding of Exp(mean - 1): keeps the mean exact.
                if (mean == 1) return 1;
                const double x = std::exponential_distribution<double>(1.0 / (mean - 1.0))(rng);
                const double fl = std::floor(x);
                const int extra = static_cast<int>(fl) + (uniform01(rng) < x - fl ? 1 : 0);
                return std::max(1, 1 + extra);
            }
        }
        return 1;
    }

    int max_value() const {
        switch (kind) {
            case Kind::Uniform:
            case Kind::TruncGaussian:
            case Kind::TwoPoint:
                return int(std::max(a, b));
            case Kind::Constant:
                return int(a);
            case Kind::ExponentialShifted:
                return -1;  // unbounded
        }
        return -1;
    }

    std::string name() const {
        auto i = [](double x) { return std::to_string(static_cast<long long>(x)); };
        switch (kind) {
            case Kind::Uniform: return "uniform:" + i(a) + ":" + i(b);
            case Kind::TruncGaussian: return "truncgauss:" + i(a) + ":" + i(b);
            case Kind::TwoPoint: return "twopoint:" + i(a) + ":" + i(b);
            case Kind::Constant: return "constant:" + i(a);
            case Kind::ExponentialShifted: {
                std::string m = std::to_string(mean);
                m.erase(m.find_last_not_of('0') + 1);
                if (m.back() == '.') m.pop_back();
                return "exp:" + m;
            }
        }
        return "?";
    }

    /// Parses the textual form produced by name(): uniform:1:3, truncgauss:1:3,
    /// twopoint:2:4, constant:3, exp:2.
    static MultiPassDistribution parse(const std::string& text) {
        std::vector<std::string> parts;
        std::size_t start = 0;
        while (true) {
            auto colon = text.find(':', start);
            parts.push_back(text.substr(start, colon - start));
            if (colon == std::string::npos) break;
            start = colon + 1;
        }
        auto num = [&](std::size_t k) {
            if (k >= parts.size()) throw Error("multi-pass distribution \"" + text + "\" is missing a parameter");
            try {
                return std::stod(parts[k]);
            } catch (const std::exception&) {
                throw Error("multi-pass distribution \"" + text + "\": bad number \"" + parts[k] + "\"");
            }
        };
        MultiPassDistribution d;
        const auto& tag = parts[0];
        if (tag == "uniform") d = uniform(int(num(1)), int(num(2)));
        else if (tag == "truncgauss") {
            const double lo = num(1), hi = num(2);
            d = trunc_gaussian(int(lo), int(hi), (lo + hi) / 2.0, (hi - lo) / 2.0);
        } else if (tag == "twopoint") d = two_point(int(num(1)), int(num(2)));
        else if (tag == "constant") d = constant(int(num(1)));
        else if (tag == "exp") d = exponential_shifted(num(1));
        else throw Error("unknown multi-pass distribution \"" + text + "\"");
        d.validate();
        return d;
    }
};

/// The fixed list evaluated by the distribution-shift sweep.
inline std::vector<MultiPassDistribution> distribution_shift_suite() {
    return {MultiPassDistribution::uniform(1, 3),
            MultiPassDistribution::uniform(1, 5),
            MultiPassDistribution::uniform(1, 10),
            MultiPassDistribution::trunc_gaussian(1, 3, 2.0, 1.0),
            MultiPassDistribution::two_point(2, 4),
            MultiPassDistribution::constant(3),
            MultiPassDistribution::exponential_shifted(2.0)};
}

}  // namespace marvin
