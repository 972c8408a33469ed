#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sparse_reptile/error.hpp"
#include "sparse_reptile/mask.hpp"
#include "sparse_reptile/network.hpp"
#include "sparse_reptile/pgm.hpp"

// Checkpoint layout, all integers little-endian:
//   "SMLR"  u32 version
//   u32 spec count, then per spec: u8 kind, u32 in_dim, u32 out_dim
//   u32 tensor count, then per tensor: u32 ndim, ndim x u32 dims, f64 data
//   u8 mask flag; when 1, one u8 (0 or 1) per entry of every tensor, same order
//   u64 seed, u64 meta_iter
// Tensors are stored w0, b0, w1, b1, ...

namespace sparse_reptile::harness {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'S', 'M', 'L', 'R'};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  Network net;
  std::optional<SparsityMask> mask;
  std::uint64_t seed = 0;
  std::uint64_t meta_iter = 0;
};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }

  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    }
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    }
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }

  [[nodiscard]] std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(FormatError::Kind::Truncated, "checkpoint truncated at byte " + std::to_string(pos_));
    }
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::uint32_t to_u32(std::size_t v, const char* what) {
  if (v > UINT32_MAX) {
    throw DomainError(std::string("checkpoint: ") + what + " exceeds 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

inline FormatError malformed(const std::string& what) {
  return FormatError(FormatError::Kind::Malformed, "checkpoint: " + what);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  ck.net.validate();
  if (ck.mask) {
    require_congruent(ck.net, *ck.mask);
  }
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, 4);
  w.u32(ck.version);
  w.u32(detail::to_u32(ck.net.specs.size(), "spec count"));
  for (const auto& s : ck.net.specs) {
    w.u8(static_cast<std::uint8_t>(s.kind));
    w.u32(detail::to_u32(s.in_dim, "in_dim"));
    w.u32(detail::to_u32(s.out_dim, "out_dim"));
  }
  const auto tensors = parameter_tensors(ck.net);
  w.u32(detail::to_u32(tensors.size(), "tensor count"));
  for (const Tensor* t : tensors) {
    w.u32(detail::to_u32(t->rank(), "ndim"));
    for (std::size_t d : t->shape()) {
      w.u32(detail::to_u32(d, "dimension"));
    }
    for (double v : t->data()) {
      w.f64(v);
    }
  }
  w.u8(ck.mask ? 1 : 0);
  if (ck.mask) {
    for (const Tensor* m : ck.mask->tensors()) {
      for (double v : m->data()) {
        w.u8(v != 0.0 ? 1 : 0);
      }
    }
  }
  w.u64(ck.seed);
  w.u64(ck.meta_iter);
  return std::move(w.bytes());
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 4) {
    throw FormatError(FormatError::Kind::Truncated, "checkpoint shorter than its magic");
  }
  for (int i = 0; i < 4; ++i) {
    if (r.u8() != static_cast<std::uint8_t>(kCheckpointMagic[i])) {
      throw FormatError(FormatError::Kind::BadMagic, "checkpoint: bad magic");
    }
  }
  Checkpoint ck;
  ck.version = r.u32();
  if (ck.version != kCheckpointVersion) {
    throw FormatError(FormatError::Kind::VersionMismatch,
                      "checkpoint: version " + std::to_string(ck.version) + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t n_specs = r.u32();
  r.need(static_cast<std::size_t>(n_specs) * 9);
  std::vector<LayerSpec> specs;
  for (std::uint32_t i = 0; i < n_specs; ++i) {
    const std::uint8_t kind = r.u8();
    if (kind > static_cast<std::uint8_t>(LayerKind::ReLU)) {
      throw detail::malformed("unknown layer kind " + std::to_string(kind));
    }
    LayerSpec s{static_cast<LayerKind>(kind), r.u32(), r.u32()};
    specs.push_back(s);
  }
  Network net;
  try {
    net = Network::zeros(specs);
  } catch (const DimensionError& e) {
    throw detail::malformed(e.what());
  }
  const std::uint32_t n_tensors = r.u32();
  auto tensors = parameter_tensors(net);
  if (n_tensors != tensors.size()) {
    throw detail::malformed("tensor count " + std::to_string(n_tensors) + " does not match layer specs");
  }
  for (Tensor* t : tensors) {
    const std::uint32_t ndim = r.u32();
    r.need(static_cast<std::size_t>(ndim) * 4);
    Shape shape;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      shape.push_back(r.u32());
    }
    if (shape != t->shape()) {
      throw detail::malformed("tensor shape " + shape_string(shape) + " does not match layer specs");
    }
    r.need(t->size() * 8);
    for (double& v : t->data()) {
      v = r.f64();
    }
  }
  const std::uint8_t has_mask = r.u8();
  if (has_mask > 1) {
    throw detail::malformed("mask flag must be 0 or 1");
  }
  if (has_mask) {
    SparsityMask mask = SparsityMask::zeros_like(net);
    std::vector<Tensor*> mt;
    for (std::size_t l = 0; l < mask.weights.size(); ++l) {
      mt.push_back(&mask.weights[l]);
      mt.push_back(&mask.biases[l]);
    }
    for (Tensor* m : mt) {
      r.need(m->size());
      for (double& v : m->data()) {
        const std::uint8_t b = r.u8();
        if (b > 1) {
          throw detail::malformed("mask entries must be 0 or 1");
        }
        v = b;
      }
    }
    ck.mask = std::move(mask);
  }
  ck.seed = r.u64();
  ck.meta_iter = r.u64();
  if (r.remaining() != 0) {
    throw detail::malformed(std::to_string(r.remaining()) + " trailing bytes");
  }
  ck.net = std::move(net);
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto bytes = encode_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write checkpoint " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("failed writing checkpoint " + path.string());
  }
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace sparse_reptile::harness
