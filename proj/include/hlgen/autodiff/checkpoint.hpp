// Copyright 2026 The hlgen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "hlgen/autodiff/graph.hpp"
#include "hlgen/autodiff/tensor.hpp"
#include "hlgen/error.hpp"

// Binary checkpoint layout (all integers little-endian):
//   "HFCK" | u32 version
//   repeated until EOF:
//     u64 name_len | name bytes (UTF-8) | u64 rank | u64 dims[rank] | f64 data[prod(dims)]
namespace hlgen::ad {

inline constexpr std::array<char, 4> kCheckpointMagic = {'H', 'F', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void write_le(std::ostream& os, T value) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
bool read_le(std::istream& is, T& value) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) return false;
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  std::memcpy(&value, buf, sizeof(T));
  return true;
}

}  // namespace detail

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline void write_checkpoint(std::ostream& os, const NamedTensors& tensors) {
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::write_le<std::uint32_t>(os, kCheckpointVersion);
  for (const auto& [name, t] : tensors) {
    detail::write_le<std::uint64_t>(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_le<std::uint64_t>(os, t.rank());
    for (std::size_t d : t.shape()) detail::write_le<std::uint64_t>(os, d);
    for (double v : t.data()) detail::write_le<double>(os, v);
  }
  if (!os) throw Error("checkpoint write failed");
}

inline NamedTensors read_checkpoint(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw CheckpointMismatch("not a checkpoint (bad magic)");
  }
  std::uint32_t version = 0;
  if (!detail::read_le(is, version) || version != kCheckpointVersion) {
    throw CheckpointMismatch("unsupported checkpoint version " + std::to_string(version));
  }
  NamedTensors out;
  std::uint64_t name_len = 0;
  while (detail::read_le(is, name_len)) {
    if (name_len > (1u << 20)) throw CheckpointMismatch("corrupt checkpoint record");
    std::string name(name_len, '\0');
    std::uint64_t rank = 0;
    if (!is.read(name.data(), static_cast<std::streamsize>(name_len)) || !detail::read_le(is, rank) ||
        rank > 8) {
      throw CheckpointMismatch("truncated checkpoint record");
    }
    Shape shape(rank);
    for (auto& d : shape) {
      std::uint64_t v = 0;
      if (!detail::read_le(is, v)) throw CheckpointMismatch("truncated checkpoint record " + name);
      d = v;
    }
    Tensor t(shape);
    for (double& v : t.data())
      if (!detail::read_le(is, v)) throw CheckpointMismatch("truncated checkpoint data " + name);
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

inline NamedTensors collect(const ParameterSet& params) {
  NamedTensors out;
  for (const auto& p : params) out.emplace_back(p.name, p.value);
  return out;
}

/// Copies tensors into `params`; names and shapes must match one-to-one.
inline void assign(ParameterSet& params, const NamedTensors& tensors) {
  if (tensors.size() != params.size()) {
    throw CheckpointMismatch("checkpoint holds " + std::to_string(tensors.size()) +
                             " tensors, model expects " + std::to_string(params.size()));
  }
  for (const auto& [name, t] : tensors) {
    Parameter* p = params.find(name);
    if (!p) throw CheckpointMismatch("checkpoint tensor '" + name + "' not in model");
    if (p->value.shape() != t.shape()) {
      throw CheckpointMismatch("shape mismatch for '" + name + "': checkpoint " +
                               shape_str(t.shape()) + ", model " + shape_str(p->value.shape()));
    }
    p->value = t;
  }
}

inline void save_checkpoint(const std::string& path, const ParameterSet& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open checkpoint for writing: " + path);
  write_checkpoint(os, collect(params));
}

inline void load_checkpoint(const std::string& path, ParameterSet& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingPrerequisite("checkpoint not found: " + path);
  assign(params, read_checkpoint(is));
}

}  // namespace hlgen::ad
