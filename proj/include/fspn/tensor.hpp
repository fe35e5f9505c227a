#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace fspn {

struct Tensor {
    std::vector<int> shape;
    std::vector<float> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        v.assign(static_cast<size_t>(numel(shape)), 0.0f);
    }
    Tensor(std::vector<int> s, std::vector<float> data)
        : shape(std::move(s)), v(std::move(data)) {
        if (v.size() != static_cast<size_t>(numel(shape)))
            throw std::invalid_argument("tensor data does not match shape");
    }

    static long numel(const std::vector<int>& s) {
        long n = 1;
        for (int d : s) n *= d;
        return n;
    }
    long size() const { return static_cast<long>(v.size()); }
    float& operator[](size_t i) { return v[i]; }
    float operator[](size_t i) const { return v[i]; }
};

enum class Partition : uint8_t { common = 0, head = 1 };

struct ParamArray {
    std::string name;
    Partition part = Partition::common;
    int head = -1;  // valid when part == head
    std::vector<int> shape;
    std::vector<float> v;

    long size() const { return static_cast<long>(v.size()); }
};

// Ordered, named parameter arrays with a common/head partition tag per array.
// Order is part of the structure: aggregation and serialization walk arrays
// in insertion order so federated reductions are reproducible.
class ParamSet {
public:
    ParamArray& add(const std::string& name, Partition part, int head,
                    std::vector<int> shape) {
        if (index_.count(name))
            throw std::invalid_argument("duplicate param name: " + name);
        index_[name] = arrays_.size();
        arrays_.push_back(
            {name, part, head, std::move(shape), {}});
        ParamArray& a = arrays_.back();
        a.v.assign(static_cast<size_t>(Tensor::numel(a.shape)), 0.0f);
        return a;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    ParamArray& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end())
            throw std::out_of_range("no param named " + name);
        return arrays_[it->second];
    }
    const ParamArray& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end())
            throw std::out_of_range("no param named " + name);
        return arrays_[it->second];
    }

    std::vector<ParamArray>& arrays() { return arrays_; }
    const std::vector<ParamArray>& arrays() const { return arrays_; }
    size_t count() const { return arrays_.size(); }

    long total_size() const {
        long n = 0;
        for (const auto& a : arrays_) n += a.size();
        return n;
    }

    // Same names, order, tags and shapes.
    static bool same_structure(const ParamSet& a, const ParamSet& b) {
        if (a.arrays_.size() != b.arrays_.size()) return false;
        for (size_t i = 0; i < a.arrays_.size(); ++i) {
            const auto& x = a.arrays_[i];
            const auto& y = b.arrays_[i];
            if (x.name != y.name || x.part != y.part || x.head != y.head ||
                x.shape != y.shape)
                return false;
        }
        return true;
    }

    ParamSet zeros_like() const {
        ParamSet g;
        for (const auto& a : arrays_) g.add(a.name, a.part, a.head, a.shape);
        return g;
    }

    // Subset containing only arrays matching the partition (and head id when
    // head >= 0); values are copied.
    ParamSet filtered(Partition part, int head = -1) const {
        ParamSet out;
        for (const auto& a : arrays_) {
            if (a.part != part) continue;
            if (part == Partition::head && head >= 0 && a.head != head)
                continue;
            out.add(a.name, a.part, a.head, a.shape).v = a.v;
        }
        return out;
    }

    // Overwrite matching arrays (by name) with values from `src`.
    void assign_from(const ParamSet& src) {
        for (const auto& a : src.arrays_) {
            ParamArray& dst = at(a.name);
            if (dst.shape != a.shape)
                throw std::invalid_argument("shape mismatch on " + a.name);
            dst.v = a.v;
        }
    }

    std::vector<float> flatten() const {
        std::vector<float> out;
        out.reserve(static_cast<size_t>(total_size()));
        for (const auto& a : arrays_) out.insert(out.end(), a.v.begin(), a.v.end());
        return out;
    }

    void unflatten(const std::vector<float>& flat) {
        if (flat.size() != static_cast<size_t>(total_size()))
            throw std::invalid_argument("flat size mismatch");
        size_t pos = 0;
        for (auto& a : arrays_) {
            std::copy(flat.begin() + pos, flat.begin() + pos + a.v.size(),
                      a.v.begin());
            pos += a.v.size();
        }
    }

    bool operator==(const ParamSet& o) const {
        if (!same_structure(*this, o)) return false;
        for (size_t i = 0; i < arrays_.size(); ++i)
            if (arrays_[i].v != o.arrays_[i].v) return false;
        return true;
    }

private:
    std::vector<ParamArray> arrays_;
    std::unordered_map<std::string, size_t> index_;
};

// Checkpoint file format: "FSPNCKPT" magic, version, named array table.
void save_checkpoint(const std::string& path, const ParamSet& params);
ParamSet load_checkpoint(const std::string& path);

}  // namespace fspn
