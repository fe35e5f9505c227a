#include "fspn/tensor.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

namespace fspn {

namespace {

constexpr char kMagic[8] = {'F', 'S', 'P', 'N', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_bytes(std::FILE* f, const void* p, size_t n) {
    if (std::fwrite(p, 1, n, f) != n)
        throw std::runtime_error("checkpoint write failed");
}

void read_bytes(std::FILE* f, void* p, size_t n) {
    if (std::fread(p, 1, n, f) != n)
        throw std::runtime_error("checkpoint read failed (truncated file?)");
}

template <typename T>
void write_pod(std::FILE* f, T x) {
    write_bytes(f, &x, sizeof(T));
}

template <typename T>
T read_pod(std::FILE* f) {
    T x;
    read_bytes(f, &x, sizeof(T));
    return x;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamSet& params) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    write_bytes(f.get(), kMagic, sizeof(kMagic));
    write_pod<uint32_t>(f.get(), kVersion);
    write_pod<uint32_t>(f.get(), static_cast<uint32_t>(params.count()));
    for (const auto& a : params.arrays()) {
        write_pod<uint16_t>(f.get(), static_cast<uint16_t>(a.name.size()));
        write_bytes(f.get(), a.name.data(), a.name.size());
        write_pod<uint8_t>(f.get(), static_cast<uint8_t>(a.part));
        write_pod<int32_t>(f.get(), a.head);
        write_pod<uint8_t>(f.get(), static_cast<uint8_t>(a.shape.size()));
        for (int d : a.shape) write_pod<int32_t>(f.get(), d);
        write_bytes(f.get(), a.v.data(), a.v.size() * sizeof(float));
    }
}

ParamSet load_checkpoint(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open " + path);
    char magic[8];
    read_bytes(f.get(), magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error(path + " is not a checkpoint file");
    uint32_t version = read_pod<uint32_t>(f.get());
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version");
    uint32_t count = read_pod<uint32_t>(f.get());
    ParamSet out;
    for (uint32_t i = 0; i < count; ++i) {
        uint16_t len = read_pod<uint16_t>(f.get());
        std::string name(len, '\0');
        read_bytes(f.get(), name.data(), len);
        auto part = static_cast<Partition>(read_pod<uint8_t>(f.get()));
        int32_t head = read_pod<int32_t>(f.get());
        uint8_t ndim = read_pod<uint8_t>(f.get());
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = read_pod<int32_t>(f.get());
        ParamArray& a = out.add(name, part, head, shape);
        read_bytes(f.get(), a.v.data(), a.v.size() * sizeof(float));
    }
    return out;
}

}  // namespace fspn
