#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hgan/errors.hpp"
#include "hgan/tensor.hpp"

namespace hgan {

// Little-endian binary stream; all round-trips are bit-exact.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path) : f_(path, std::ios::binary) {
    require(f_.good(), Err::IOError, "cannot open for writing: " + path.string());
  }
  void u32(uint32_t v) { raw(&v, sizeof v); }
  void u64(uint64_t v) { raw(&v, sizeof v); }
  void i64(int64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    raw(v.data(), v.size() * sizeof(double));
  }
  void tensor(const Tensor& t) {
    u64(t.ndim());
    for (size_t i = 0; i < t.ndim(); ++i) i64(t.dim(i));
    doubles(t.data());
  }
  void close() {
    f_.close();
    require(f_.good(), Err::IOError, "write failed");
  }

 private:
  void raw(const void* p, size_t n) { f_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  std::ofstream f_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path) : f_(path, std::ios::binary) {
    require(f_.good(), Err::DecodeError, "cannot open for reading: " + path.string());
  }
  uint32_t u32() { return get<uint32_t>(); }
  uint64_t u64() { return get<uint64_t>(); }
  int64_t i64() { return get<int64_t>(); }
  double f64() { return get<double>(); }
  std::string str() {
    uint64_t n = u64();
    require(n <= (1ULL << 32), Err::DecodeError, "string length corrupt");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  std::vector<double> doubles() {
    uint64_t n = u64();
    require(n <= (1ULL << 34), Err::DecodeError, "array length corrupt");
    std::vector<double> v(n);
    raw(v.data(), n * sizeof(double));
    return v;
  }
  // Reads dims + data into an existing tensor, which must match exactly.
  void tensor_into(Tensor& t, Err mismatch_code = Err::DecodeError) {
    uint64_t nd = u64();
    require(nd == t.ndim(), mismatch_code, "tensor rank mismatch");
    for (size_t i = 0; i < nd; ++i)
      require(i64() == t.dim(i), mismatch_code, "tensor dim mismatch");
    auto v = doubles();
    require(v.size() == t.data().size(), mismatch_code, "tensor size mismatch");
    t.data() = std::move(v);
  }

 private:
  template <class T>
  T get() {
    T v;
    raw(&v, sizeof v);
    return v;
  }
  void raw(void* p, size_t n) {
    f_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    require(f_.gcount() == static_cast<std::streamsize>(n), Err::DecodeError, "unexpected end of file");
  }
  std::ifstream f_;
};

}  // namespace hgan
