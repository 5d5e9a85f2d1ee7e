#include "edno/tensor_file.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace edno {

namespace {

constexpr char kMagic[4] = {'E', 'D', 'N', 'O'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
    uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = uint8_t(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& is) {
    uint8_t b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("tensor file: truncated header");
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint64_t get_u64(std::istream& is) {
    uint8_t b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw IoError("tensor file: truncated field");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
}

} // namespace

void write_tensor_file(const std::string& path, const std::vector<TensorRecord>& records) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open for writing: " + tmp);
        os.write(kMagic, 4);
        put_u32(os, kVersion);
        put_u64(os, records.size());
        for (const auto& r : records) {
            const size_t want = r.elem_count() * dtype_size(r.dtype);
            if (r.payload.size() != want)
                throw IoError("record '" + r.name + "': payload size does not match dims");
            put_u64(os, r.name.size());
            os.write(r.name.data(), std::streamsize(r.name.size()));
            const uint8_t code = uint8_t(r.dtype);
            os.write(reinterpret_cast<const char*>(&code), 1);
            put_u64(os, r.dims.size());
            for (int64_t d : r.dims) put_u64(os, uint64_t(d));
            os.write(reinterpret_cast<const char*>(r.payload.data()),
                     std::streamsize(r.payload.size()));
        }
        if (!os) throw IoError("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::vector<TensorRecord> read_tensor_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("tensor file: bad magic in " + path);
    const uint32_t version = get_u32(is);
    if (version != kVersion)
        throw IoError("tensor file: unsupported version " + std::to_string(version));
    const uint64_t count = get_u64(is);
    std::vector<TensorRecord> out;
    out.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        TensorRecord r;
        const uint64_t name_len = get_u64(is);
        r.name.resize(name_len);
        is.read(r.name.data(), std::streamsize(name_len));
        uint8_t code = 0;
        is.read(reinterpret_cast<char*>(&code), 1);
        if (!is) throw IoError("tensor file: truncated record header");
        if (code > 1) throw IoError("tensor file: bad dtype code " + std::to_string(code));
        r.dtype = DType(code);
        const uint64_t ndim = get_u64(is);
        r.dims.resize(ndim);
        for (uint64_t d = 0; d < ndim; ++d) r.dims[d] = int64_t(get_u64(is));
        r.payload.resize(r.elem_count() * dtype_size(r.dtype));
        is.read(reinterpret_cast<char*>(r.payload.data()), std::streamsize(r.payload.size()));
        if (!is) throw IoError("tensor file: truncated payload in record '" + r.name + "'");
        out.push_back(std::move(r));
    }
    return out;
}

const TensorRecord* find_record(const std::vector<TensorRecord>& records,
                                const std::string& name) {
    for (const auto& r : records)
        if (r.name == name) return &r;
    return nullptr;
}

} // namespace edno
