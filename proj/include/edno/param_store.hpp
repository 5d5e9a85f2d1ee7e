#ifndef EDNO_PARAM_STORE_HPP
#define EDNO_PARAM_STORE_HPP

#include <map>
#include <string>

#include "edno/grid.hpp"

namespace edno {

/// Flat registry of learnable parameter blocks keyed by stable strings.
/// Iteration order is the sorted key order, which keeps every traversal
/// (initialization excepted, see model.hpp) deterministic.
template <typename T>
class ParamStore {
public:
    Block<T>& add(const std::string& key, std::vector<int64_t> dims) {
        auto [it, fresh] = blocks_.emplace(key, Block<T>(std::move(dims)));
        if (!fresh) throw ConfigError("ParamStore: duplicate key " + key);
        return it->second;
    }

    bool has(const std::string& key) const { return blocks_.count(key) != 0; }

    const Block<T>& at(const std::string& key) const {
        auto it = blocks_.find(key);
        if (it == blocks_.end()) throw ConfigError("ParamStore: missing key " + key);
        return it->second;
    }

    Block<T>& at(const std::string& key) {
        auto it = blocks_.find(key);
        if (it == blocks_.end()) throw ConfigError("ParamStore: missing key " + key);
        return it->second;
    }

    const std::map<std::string, Block<T>>& blocks() const { return blocks_; }
    std::map<std::string, Block<T>>& blocks() { return blocks_; }

    size_t total_params() const {
        size_t n = 0;
        for (const auto& [k, b] : blocks_) n += b.size();
        return n;
    }

private:
    std::map<std::string, Block<T>> blocks_;
};

/// Gradient blocks mirroring a ParamStore: exactly the same keys and dims,
/// zero-initialized.
template <typename T>
class GradStore {
public:
    GradStore() = default;
    explicit GradStore(const ParamStore<T>& params) {
        for (const auto& [k, b] : params.blocks()) blocks_.emplace(k, Block<T>(b.dims));
    }

    Block<T>& at(const std::string& key) {
        auto it = blocks_.find(key);
        if (it == blocks_.end()) throw ConfigError("GradStore: missing key " + key);
        return it->second;
    }
    const Block<T>& at(const std::string& key) const {
        auto it = blocks_.find(key);
        if (it == blocks_.end()) throw ConfigError("GradStore: missing key " + key);
        return it->second;
    }

    const std::map<std::string, Block<T>>& blocks() const { return blocks_; }
    std::map<std::string, Block<T>>& blocks() { return blocks_; }

    /// this += o, elementwise over every block.
    void accumulate(const GradStore& o) {
        for (auto& [k, b] : blocks_) {
            const Block<T>& ob = o.at(k);
            for (size_t i = 0; i < b.size(); ++i) b.v[i] += ob.v[i];
        }
    }

    void scale(T s) {
        for (auto& [k, b] : blocks_)
            for (auto& x : b.v) x *= s;
    }

private:
    std::map<std::string, Block<T>> blocks_;
};

} // namespace edno

#endif
