/* Copyright 2026 The SpeechCache Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SPEECHCACHE_BYTES_HPP_
#define SPEECHCACHE_BYTES_HPP_

#include <cstdint>
#include <cstring>
#include <string>
#include <type_traits>
#include <vector>

#include "speechcache/error.hpp"

namespace speechcache {

// Little-endian-on-host binary records. Not portable across byte orders;
// files carry a magic tag so a mismatch fails loudly.
class ByteWriter {
 public:
  template <typename T>
  void put(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  std::vector<char>& bytes() { return buf_; }
  std::vector<char> take() { return std::move(buf_); }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(const char* data, std::size_t size) : p_(data), end_(data + size) {}
  explicit ByteReader(const std::vector<char>& v) : ByteReader(v.data(), v.size()) {}

  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    T v;
    get_bytes(&v, sizeof(T));
    return v;
  }
  void get_bytes(void* dst, std::size_t n) {
    SC_CHECK(static_cast<std::size_t>(end_ - p_) >= n, ErrorCode::kFormat, "truncated record");
    std::memcpy(dst, p_, n);
    p_ += n;
  }
  std::string get_string(std::size_t max_len = 1 << 20) {
    const auto n = get<std::uint32_t>();
    SC_CHECK(n <= max_len, ErrorCode::kFormat, "implausible string length");
    std::string s(n, '\0');
    get_bytes(s.data(), n);
    return s;
  }
  void expect_magic(const char (&tag)[5]) {
    char got[4];
    get_bytes(got, 4);
    SC_CHECK(std::memcmp(got, tag, 4) == 0, ErrorCode::kFormat,
             std::string("bad magic, expected ") + tag);
  }
  std::size_t remaining() const { return static_cast<std::size_t>(end_ - p_); }

 private:
  const char* p_;
  const char* end_;
};

}  // namespace speechcache

#endif  // SPEECHCACHE_BYTES_HPP_
