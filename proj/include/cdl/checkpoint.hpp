#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include "cdl/model.hpp"
#include "cdl/optim.hpp"

// Binary checkpoint: model config + parameters + Adam state + the scalar
// training state needed to reproduce a run. Payloads are raw little-endian
// arrays, so save/load round trips are bit-exact.

namespace cdl {

template <typename T>
struct TrainingSnapshot {
    ModelConfig model_cfg;
    ModelParams<T> params;
    OptimizerState<T> opt;
    T lr = T(0);
    int64_t epoch = 0;
    T best_val_loss = T(0);
    uint64_t seed = 0;
    std::map<std::string, std::string> meta;  // free-form run description
};

namespace detail {

constexpr char kCkptMagic[8] = {'C', 'D', 'L', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kCkptVersion = 1;

inline void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline void write_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }

inline void write_str(std::ostream& os, const std::string& s) {
    write_u32(os, uint32_t(s.size()));
    os.write(s.data(), std::streamsize(s.size()));
}

inline uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw data_error("checkpoint: truncated file");
    return v;
}
inline uint64_t read_u64(std::istream& is) {
    uint64_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 8)) throw data_error("checkpoint: truncated file");
    return v;
}
inline double read_f64(std::istream& is) {
    double v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 8)) throw data_error("checkpoint: truncated file");
    return v;
}
inline std::string read_str(std::istream& is) {
    const uint32_t n = read_u32(is);
    if (n > (1u << 20)) throw data_error("checkpoint: implausible string length");
    std::string s(n, '\0');
    if (n && !is.read(s.data(), n)) throw data_error("checkpoint: truncated file");
    return s;
}

template <typename T>
void write_tensor(std::ostream& os, const std::string& name, const std::vector<T>& v) {
    write_str(os, name);
    write_u64(os, v.size());
    os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(T)));
}

template <typename T>
void fill_tensor(const std::map<std::string, std::vector<T>>& tensors, const std::string& name,
                 std::vector<T>& out) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw data_error("checkpoint: missing tensor " + name);
    if (it->second.size() != out.size())
        throw data_error("checkpoint: size mismatch for tensor " + name);
    out = it->second;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const TrainingSnapshot<T>& snap) {
    static_assert(std::is_floating_point_v<T>);
    validate_params(snap.params, snap.model_cfg);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw data_error("checkpoint: cannot open for writing: " + path);

    os.write(detail::kCkptMagic, 8);
    detail::write_u32(os, detail::kCkptVersion);
    os.put(sizeof(T) == 4 ? 0 : 1);

    std::map<std::string, std::string> meta = snap.meta;
    meta["model.num_filters"] = std::to_string(snap.model_cfg.num_filters);
    meta["model.filter_size"] = std::to_string(snap.model_cfg.filter_size);
    meta["model.stride"] = std::to_string(snap.model_cfg.stride);
    meta["model.num_layers"] = std::to_string(snap.model_cfg.num_layers);
    meta["model.adaptive"] = snap.model_cfg.adaptive ? "1" : "0";
    detail::write_u32(os, uint32_t(meta.size()));
    for (const auto& [k, v] : meta) {
        detail::write_str(os, k);
        detail::write_str(os, v);
    }

    detail::write_u32(os, 5);  // scalar count
    detail::write_str(os, "lr");
    detail::write_f64(os, double(snap.lr));
    detail::write_str(os, "best_val_loss");
    detail::write_f64(os, double(snap.best_val_loss));
    detail::write_str(os, "epoch");
    detail::write_u64(os, uint64_t(snap.epoch));
    detail::write_str(os, "adam_step");
    detail::write_u64(os, uint64_t(snap.opt.step));
    detail::write_str(os, "seed");
    detail::write_u64(os, snap.seed);

    uint32_t n_tensors = 0;
    snap.params.for_each_array([&](const std::string&, const std::vector<T>&) { ++n_tensors; });
    detail::write_u32(os, 3 * n_tensors);
    snap.params.for_each_array([&](const std::string& name, const std::vector<T>& v) {
        detail::write_tensor(os, name, v);
    });
    snap.opt.m.for_each_array([&](const std::string& name, const std::vector<T>& v) {
        detail::write_tensor(os, "adam.m." + name, v);
    });
    snap.opt.v.for_each_array([&](const std::string& name, const std::vector<T>& v) {
        detail::write_tensor(os, "adam.v." + name, v);
    });
    if (!os) throw data_error("checkpoint: write failed: " + path);
}

template <typename T>
TrainingSnapshot<T> load_checkpoint(const std::string& path) {
    static_assert(std::is_floating_point_v<T>);
    std::ifstream is(path, std::ios::binary);
    if (!is) throw data_error("checkpoint: cannot open: " + path);

    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
        throw data_error("checkpoint: bad magic in " + path);
    const uint32_t version = detail::read_u32(is);
    if (version != detail::kCkptVersion)
        throw data_error("checkpoint: unsupported version " + std::to_string(version));
    const int dtype = is.get();
    if (dtype != (sizeof(T) == 4 ? 0 : 1))
        throw data_error("checkpoint: stored precision does not match requested type");

    TrainingSnapshot<T> snap;
    const uint32_t n_meta = detail::read_u32(is);
    for (uint32_t i = 0; i < n_meta; ++i) {
        std::string k = detail::read_str(is);
        snap.meta[k] = detail::read_str(is);
    }
    auto meta_int = [&](const char* key) {
        auto it = snap.meta.find(key);
        if (it == snap.meta.end()) throw data_error(std::string("checkpoint: missing ") + key);
        return std::stoi(it->second);
    };
    snap.model_cfg.num_filters = meta_int("model.num_filters");
    snap.model_cfg.filter_size = meta_int("model.filter_size");
    snap.model_cfg.stride = meta_int("model.stride");
    snap.model_cfg.num_layers = meta_int("model.num_layers");
    snap.model_cfg.adaptive = meta_int("model.adaptive") != 0;
    snap.model_cfg.validate();

    const uint32_t n_scalars = detail::read_u32(is);
    for (uint32_t i = 0; i < n_scalars; ++i) {
        const std::string name = detail::read_str(is);
        if (name == "lr") snap.lr = T(detail::read_f64(is));
        else if (name == "best_val_loss") snap.best_val_loss = T(detail::read_f64(is));
        else if (name == "epoch") snap.epoch = int64_t(detail::read_u64(is));
        else if (name == "adam_step") snap.opt.step = int64_t(detail::read_u64(is));
        else if (name == "seed") snap.seed = detail::read_u64(is);
        else detail::read_u64(is);  // unknown scalar: skip its 8 bytes
    }

    std::map<std::string, std::vector<T>> tensors;
    const uint32_t n_tensors = detail::read_u32(is);
    for (uint32_t i = 0; i < n_tensors; ++i) {
        const std::string name = detail::read_str(is);
        const uint64_t len = detail::read_u64(is);
        if (len > (1ull << 32)) throw data_error("checkpoint: implausible tensor length");
        std::vector<T> v(len);
        if (len && !is.read(reinterpret_cast<char*>(v.data()),
                            std::streamsize(len * sizeof(T))))
            throw data_error("checkpoint: truncated tensor " + name);
        tensors.emplace(name, std::move(v));
    }

    snap.params = init_params<T>(snap.model_cfg, 0, snap.model_cfg.adaptive ? T(1) : T(0));
    snap.opt.m = zero_like(snap.params);
    snap.opt.v = zero_like(snap.params);
    snap.params.for_each_array([&](const std::string& name, std::vector<T>& v) {
        detail::fill_tensor(tensors, name, v);
    });
    snap.opt.m.for_each_array([&](const std::string& name, std::vector<T>& v) {
        detail::fill_tensor(tensors, "adam.m." + name, v);
    });
    snap.opt.v.for_each_array([&](const std::string& name, std::vector<T>& v) {
        detail::fill_tensor(tensors, "adam.v." + name, v);
    });
    return snap;
}

// Model-only convenience for inference tools.
template <typename T>
std::pair<ModelConfig, ModelParams<T>> load_model(const std::string& path) {
    TrainingSnapshot<T> snap = load_checkpoint<T>(path);
    return {snap.model_cfg, std::move(snap.params)};
}

}  // namespace cdl
