#pragma once

// Named parameter storage, Adam, and the binary checkpoint container.
//
// Checkpoint layout (all integers and floats little-endian):
//   bytes 0..7   magic "MRVNCKPT"
//   u32          format version (1)
//   u32 + bytes  metadata (UTF-8 JSON, model/training configuration)
//   u32          tensor count T
//   T times:     u32 name length, name bytes, u32 rank, u64 dims[rank],
//                f64 values[prod(dims)]
//   u64          optimizer step counter
//   T times:     f64 first moments, f64 second moments (same sizes as values)

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "marvin/io.hpp"
#include "marvin/nn/tape.hpp"

namespace marvin::nn {

struct Param {
    std::string name;
    Tensor value;
    std::vector<double> grad;
    std::vector<double> m;
    std::vector<double> v;
};

class ParamStore {
public:
    std::size_t add(std::string name, Tensor value) {
        if (index_.count(name)) throw Error("duplicate parameter name \"" + name + "\"");
        const std::size_t n = value.size();
        index_[name] = params_.size();
        params_.push_back({std::move(name), std::move(value), std::vector<double>(n, 0.0),
                           std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
        return params_.size() - 1;
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
    std::size_t add_uniform(std::string name, std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
        Tensor t(std::move(shape));
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (auto& x : t.data) x = std::uniform_real_distribution<double>(-bound, bound)(rng);
        return add(std::move(name), std::move(t));
    }

    std::size_t size() const { return params_.size(); }
    Param& operator[](std::size_t i) { return params_[i]; }
    const Param& operator[](std::size_t i) const { return params_[i]; }
    std::size_t index_of(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw Error("no parameter named \"" + name + "\"");
        return it->second;
    }
    Param& at(const std::string& name) { return params_[index_of(name)]; }
    const Param& at(const std::string& name) const { return params_[index_of(name)]; }
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const std::vector<Param>& params() const { return params_; }

    std::size_t scalar_count() const {
        std::size_t c = 0;
        for (const auto& p : params_) c += p.value.size();
        return c;
    }
    std::size_t byte_count() const { return scalar_count() * sizeof(double); }
    double megabytes() const { return static_cast<double>(byte_count()) / 1e6; }

    std::uint64_t step() const { return step_; }
    void set_step(std::uint64_t s) { step_ = s; }

    void zero_grad() {
        for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
    }

    /// Binds every parameter as a gradient-tracked leaf on `tape`.
    std::vector<Var> bind(Tape& tape) const {
        std::vector<Var> vars;
        vars.reserve(params_.size());
        for (const auto& p : params_) vars.push_back(tape.leaf(p.value, true));
        return vars;
    }

    /// Adds the leaf gradients of a finished backward pass into the store,
    /// scaled by `weight`, in parameter order.
    void accumulate(const Tape& tape, const std::vector<Var>& vars, double weight = 1.0) {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const auto& g = tape.grad_of(vars[i].id);
            if (g.empty()) continue;
            auto& dst = params_[i].grad;
            for (std::size_t k = 0; k < g.size(); ++k) dst[k] += weight * g[k];
        }
    }

    std::vector<std::vector<double>> grads() const {
        std::vector<std::vector<double>> out;
        for (const auto& p : params_) out.push_back(p.grad);
        return out;
    }

    void set_grads(const std::vector<std::vector<double>>& g) {
        if (g.size() != params_.size()) throw Error("gradient list does not match parameter count");
        for (std::size_t i = 0; i < params_.size(); ++i) {
            if (g[i].size() != params_[i].value.size())
                throw Error("gradient for \"" + params_[i].name + "\" has wrong size");
            params_[i].grad = g[i];
        }
    }

    bool operator==(const ParamStore& o) const {
        if (params_.size() != o.params_.size() || step_ != o.step_) return false;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const auto &a = params_[i], &b = o.params_[i];
            if (a.name != b.name || a.value != b.value || a.m != b.m || a.v != b.v) return false;
        }
        return true;
    }

private:
    std::vector<Param> params_;
    std::map<std::string, std::size_t> index_;
    std::uint64_t step_ = 0;
};

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double decay = 0.1;            // multiplicative step decay
    std::uint64_t decay_every = 2000;  // epochs
};

/// Learning rate after `epoch` completed epochs under step decay.
inline double decayed_lr(const AdamConfig& cfg, std::uint64_t epoch) {
    if (cfg.decay_every == 0) return cfg.lr;
    return cfg.lr * std::pow(cfg.decay, static_cast<double>(epoch / cfg.decay_every));
}

/// Bias-corrected Adam update using the gradients held in the store.
inline void adam_step(ParamStore& store, double lr, const AdamConfig& cfg = {}) {
    for (std::size_t i = 0; i < store.size(); ++i)
        for (double g : store[i].grad)
            if (!std::isfinite(g)) throw Error("non-finite gradient in \"" + store[i].name + "\"");
    const std::uint64_t t = store.step() + 1;
    store.set_step(t);
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < store.size(); ++i) {
        auto& p = store[i];
        for (std::size_t k = 0; k < p.value.size(); ++k) {
            const double g = p.grad[k];
            p.m[k] = cfg.beta1 * p.m[k] + (1.0 - cfg.beta1) * g;
            p.v[k] = cfg.beta2 * p.v[k] + (1.0 - cfg.beta2) * g * g;
            const double mhat = p.m[k] / c1;
            const double vhat = p.v[k] / c2;
            p.value.data[k] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace detail {

class ByteWriter {
public:
    void u32(std::uint32_t x) { raw(x); }
    void u64(std::uint64_t x) { raw(x); }
    void f64(double x) { raw(std::bit_cast<std::uint64_t>(x)); }
    void bytes(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_ += s;
    }
    void literal(const char* s, std::size_t n) { out_.append(s, n); }
    std::string take() { return std::move(out_); }

private:
    template <class T>
    void raw(T x) {
        for (std::size_t b = 0; b < sizeof(T); ++b) out_.push_back(static_cast<char>((x >> (8 * b)) & 0xFF));
    }
    std::string out_;
};

class ByteReader {
public:
    explicit ByteReader(const std::string& s) : s_(s) {}
    std::uint32_t u32() { return raw<std::uint32_t>(); }
    std::uint64_t u64() { return raw<std::uint64_t>(); }
    double f64() { return std::bit_cast<double>(raw<std::uint64_t>()); }
    std::string bytes() {
        const auto n = u32();
        need(n);
        std::string out = s_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    std::string literal(std::size_t n) {
        need(n);
        std::string out = s_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    bool at_end() const { return pos_ == s_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > s_.size()) throw Error("checkpoint truncated at byte " + std::to_string(pos_));
    }
    template <class T>
    T raw() {
        need(sizeof(T));
        T x = 0;
        for (std::size_t b = 0; b < sizeof(T); ++b)
            x |= static_cast<T>(static_cast<unsigned char>(s_[pos_ + b])) << (8 * b);
        pos_ += sizeof(T);
        return x;
    }
    const std::string& s_;
    std::size_t pos_ = 0;
};

}  // namespace detail

constexpr char kCheckpointMagic[8] = {'M', 'R', 'V', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string serialize_checkpoint(const ParamStore& store, const std::string& metadata) {
    detail::ByteWriter w;
    w.literal(kCheckpointMagic, 8);
    w.u32(kCheckpointVersion);
    w.bytes(metadata);
    w.u32(static_cast<std::uint32_t>(store.size()));
    for (const auto& p : store.params()) {
        w.bytes(p.name);
        w.u32(static_cast<std::uint32_t>(p.value.shape.size()));
        for (auto d : p.value.shape) w.u64(d);
        for (double x : p.value.data) w.f64(x);
    }
    w.u64(store.step());
    for (const auto& p : store.params()) {
        for (double x : p.m) w.f64(x);
        for (double x : p.v) w.f64(x);
    }
    return w.take();
}

struct Checkpoint {
    ParamStore store;
    std::string metadata;
};

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
    detail::ByteReader r(bytes);
    if (r.literal(8) != std::string(kCheckpointMagic, 8)) throw Error("not a marvin checkpoint (bad magic)");
    const auto version = r.u32();
    if (version != kCheckpointVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    ck.metadata = r.bytes();
    const auto count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.bytes();
        const auto rank = r.u32();
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = r.u64();
        Tensor t(shape);
        for (auto& x : t.data) x = r.f64();
        ck.store.add(std::move(name), std::move(t));
    }
    ck.store.set_step(r.u64());
    for (std::size_t i = 0; i < ck.store.size(); ++i) {
        auto& p = ck.store[i];
        for (auto& x : p.m) x = r.f64();
        for (auto& x : p.v) x = r.f64();
    }
    if (!r.at_end()) throw Error("checkpoint has trailing bytes");
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const ParamStore& store, const std::string& metadata) {
    write_file_atomic(path, serialize_checkpoint(store, metadata));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    try {
        return deserialize_checkpoint(read_file(path));
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

}  // namespace marvin::nn
