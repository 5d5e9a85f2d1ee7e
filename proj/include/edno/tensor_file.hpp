#ifndef EDNO_TENSOR_FILE_HPP
#define EDNO_TENSOR_FILE_HPP

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "edno/grid.hpp"

// Binary tensor container.
//
// Layout (all integers little-endian):
//   "EDNO"            4 bytes magic
//   u32 version       currently 1
//   u64 record count
//   per record:
//     u64 name length, name bytes (UTF-8)
//     u8  dtype code   0 = f32, 1 = f64
//     u64 ndim, then ndim x u64 dims
//     payload          product(dims) * dtype size bytes, row-major
//
// Files are written atomically (temp file + rename), so a concurrent reader
// never sees a partial file.

namespace edno {

enum class DType : uint8_t { F32 = 0, F64 = 1 };

inline size_t dtype_size(DType d) { return d == DType::F32 ? 4 : 8; }

struct TensorRecord {
    std::string name;
    DType dtype = DType::F32;
    std::vector<int64_t> dims;
    std::vector<uint8_t> payload;

    size_t elem_count() const {
        size_t n = 1;
        for (int64_t d : dims) n *= size_t(d);
        return n;
    }

    /// Strict readers: dtype must match exactly.
    std::vector<float> as_f32() const {
        if (dtype != DType::F32) throw IoError("record '" + name + "': dtype mismatch, expected f32");
        std::vector<float> out(elem_count());
        std::memcpy(out.data(), payload.data(), payload.size());
        return out;
    }
    std::vector<double> as_f64() const {
        if (dtype != DType::F64) throw IoError("record '" + name + "': dtype mismatch, expected f64");
        std::vector<double> out(elem_count());
        std::memcpy(out.data(), payload.data(), payload.size());
        return out;
    }

    /// Converting reader (f32 <-> f64 as needed).
    template <typename T>
    std::vector<T> to_vector() const {
        std::vector<T> out(elem_count());
        if (dtype == DType::F32) {
            const float* p = reinterpret_cast<const float*>(payload.data());
            for (size_t i = 0; i < out.size(); ++i) out[i] = T(p[i]);
        } else {
            const double* p = reinterpret_cast<const double*>(payload.data());
            for (size_t i = 0; i < out.size(); ++i) out[i] = T(p[i]);
        }
        return out;
    }

    template <typename T>
    static TensorRecord from_data(std::string name, std::vector<int64_t> dims, const T* data) {
        static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
        TensorRecord r;
        r.name = std::move(name);
        r.dtype = std::is_same_v<T, float> ? DType::F32 : DType::F64;
        r.dims = std::move(dims);
        r.payload.resize(r.elem_count() * dtype_size(r.dtype));
        std::memcpy(r.payload.data(), data, r.payload.size());
        return r;
    }

    template <typename T>
    static TensorRecord from_grid(std::string name, const Grid<T>& g) {
        return from_data(std::move(name), {g.h, g.w, g.c}, g.v.data());
    }

    template <typename T>
    static TensorRecord from_block(std::string name, const Block<T>& b) {
        return from_data(std::move(name), b.dims, b.v.data());
    }

    template <typename T>
    Grid<T> to_grid() const {
        if (dims.size() != 3)
            throw IoError("record '" + name + "': expected 3-d grid, got " +
                          std::to_string(dims.size()) + "-d");
        Grid<T> g(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                  static_cast<int>(dims[2]));
        g.v = to_vector<T>();
        return g;
    }
};

void write_tensor_file(const std::string& path, const std::vector<TensorRecord>& records);
std::vector<TensorRecord> read_tensor_file(const std::string& path);

/// nullptr when absent.
const TensorRecord* find_record(const std::vector<TensorRecord>& records, const std::string& name);

} // namespace edno

#endif
