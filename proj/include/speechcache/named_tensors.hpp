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

#ifndef SPEECHCACHE_NAMED_TENSORS_HPP_
#define SPEECHCACHE_NAMED_TENSORS_HPP_

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "speechcache/error.hpp"
#include "speechcache/types.hpp"

namespace speechcache {

// Flat container of named float32 tensors.
//
// Layout (little-endian):
//   "SCNT" | u32 version | u32 count |
//   count x { u32 name_len | name | u32 ndim | u32 dims[ndim] | f32 data[] }
//
// Entries are written in name order so equal contents serialize to equal
// bytes; content_hash() is the FNV-1a digest of those bytes.
struct NamedTensor {
  std::vector<std::uint32_t> shape;
  std::vector<float> data;
};

class NamedTensorFile {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void put(const std::string& name, std::vector<std::uint32_t> shape,
           std::vector<float> data) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    SC_CHECK(n == data.size(), ErrorCode::kShapeError,
             "tensor '" + name + "' shape does not match payload");
    tensors_[name] = NamedTensor{std::move(shape), std::move(data)};
  }

  const NamedTensor& get(const std::string& name) const {
    auto it = tensors_.find(name);
    SC_CHECK(it != tensors_.end(), ErrorCode::kFormat, "missing tensor '" + name + "'");
    return it->second;
  }

  bool contains(const std::string& name) const { return tensors_.count(name) > 0; }
  const std::map<std::string, NamedTensor>& tensors() const { return tensors_; }

  std::vector<char> serialize() const {
    std::vector<char> out;
    auto put_bytes = [&](const void* p, std::size_t n) {
      const auto* c = static_cast<const char*>(p);
      out.insert(out.end(), c, c + n);
    };
    auto put_u32 = [&](std::uint32_t v) { put_bytes(&v, 4); };
    put_bytes("SCNT", 4);
    put_u32(kVersion);
    put_u32(static_cast<std::uint32_t>(tensors_.size()));
    for (const auto& [name, t] : tensors_) {
      put_u32(static_cast<std::uint32_t>(name.size()));
      put_bytes(name.data(), name.size());
      put_u32(static_cast<std::uint32_t>(t.shape.size()));
      for (auto d : t.shape) put_u32(d);
      put_bytes(t.data.data(), t.data.size() * sizeof(float));
    }
    return out;
  }

  static NamedTensorFile deserialize(const std::vector<char>& bytes) {
    std::size_t pos = 0;
    auto take = [&](void* dst, std::size_t n) {
      SC_CHECK(pos + n <= bytes.size(), ErrorCode::kFormat, "truncated tensor file");
      std::memcpy(dst, bytes.data() + pos, n);
      pos += n;
    };
    auto take_u32 = [&] {
      std::uint32_t v;
      take(&v, 4);
      return v;
    };
    char magic[4];
    take(magic, 4);
    SC_CHECK(std::memcmp(magic, "SCNT", 4) == 0, ErrorCode::kFormat, "bad magic");
    const auto version = take_u32();
    SC_CHECK(version == kVersion, ErrorCode::kFormat,
             "unsupported tensor file version " + std::to_string(version));
    NamedTensorFile file;
    const auto count = take_u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name(take_u32(), '\0');
      take(name.data(), name.size());
      std::vector<std::uint32_t> shape(take_u32());
      std::size_t n = 1;
      for (auto& d : shape) {
        d = take_u32();
        n *= d;
      }
      std::vector<float> data(n);
      take(data.data(), n * sizeof(float));
      file.put(name, std::move(shape), std::move(data));
    }
    SC_CHECK(pos == bytes.size(), ErrorCode::kFormat, "trailing bytes in tensor file");
    return file;
  }

  std::uint64_t content_hash() const {
    const auto bytes = serialize();
    Fnv1a h;
    h.update(bytes.data(), bytes.size());
    return h.digest();
  }

  void save(const std::string& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary);
    SC_CHECK(out.good(), ErrorCode::kIo, "cannot open " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }

  static NamedTensorFile load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    SC_CHECK(in.good(), ErrorCode::kIo, "cannot open " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    return deserialize(bytes);
  }

 private:
  std::map<std::string, NamedTensor> tensors_;
};

}  // namespace speechcache

#endif  // SPEECHCACHE_NAMED_TENSORS_HPP_
