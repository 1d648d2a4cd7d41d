#pragma once

#include "lvmark/common.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

namespace lvmark {

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void put_i64(std::ostream& os, std::int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void put_string(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline void put_matrix(std::ostream& os, const Matrix& m) {
  put_u64(os, static_cast<std::uint64_t>(m.rows()));
  put_u64(os, static_cast<std::uint64_t>(m.cols()));
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(double) * m.size()));
}

inline std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline std::int64_t get_i64(std::istream& is) {
  std::int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline std::string get_string(std::istream& is) {
  const auto n = get_u64(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}
inline Matrix get_matrix(std::istream& is) {
  const auto rows = get_u64(is);
  const auto cols = get_u64(is);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
  return m;
}

}  // namespace detail

/// Writes to `<path>.tmp` then renames, so failures never leave a partial
/// file at the destination.
template <typename WriteFn>
void atomic_write(const std::filesystem::path& path, WriteFn&& write_fn) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + tmp.string());
    write_fn(os);
    os.flush();
    if (!os) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

using NamedMatrices = std::vector<std::pair<std::string, Matrix>>;

inline constexpr std::uint32_t kCheckpointMagic = 0x4b43564cu;  // "LVCK"
inline constexpr std::uint32_t kHeatmapMagic = 0x4d48564cu;     // "LVHM"

/// Single-file training checkpoint: config echo, parameter blobs, optimizer
/// state, step counter and seed. Native-endian doubles.
struct CheckpointData {
  std::string config_json;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  NamedMatrices tensors;
  bool has_optimizer = false;
  std::int64_t adam_t = 0;
  NamedMatrices adam_m;
  NamedMatrices adam_v;
};

inline void save_checkpoint(const std::filesystem::path& path, const CheckpointData& ckpt) {
  atomic_write(path, [&](std::ostream& os) {
    detail::put_u32(os, kCheckpointMagic);
    detail::put_u32(os, 1);
    detail::put_string(os, ckpt.config_json);
    detail::put_u64(os, ckpt.seed);
    detail::put_i64(os, ckpt.step);
    detail::put_u64(os, ckpt.tensors.size());
    for (const auto& [name, m] : ckpt.tensors) {
      detail::put_string(os, name);
      detail::put_matrix(os, m);
    }
    detail::put_u32(os, ckpt.has_optimizer ? 1 : 0);
    if (ckpt.has_optimizer) {
      detail::put_i64(os, ckpt.adam_t);
      detail::put_u64(os, ckpt.adam_m.size());
      for (const auto& [name, m] : ckpt.adam_m) {
        detail::put_string(os, name);
        detail::put_matrix(os, m);
      }
      detail::put_u64(os, ckpt.adam_v.size());
      for (const auto& [name, m] : ckpt.adam_v) {
        detail::put_string(os, name);
        detail::put_matrix(os, m);
      }
    }
  });
}

inline CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  if (detail::get_u32(is) != kCheckpointMagic) {
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  if (detail::get_u32(is) != 1) {
    throw std::runtime_error("unsupported checkpoint version: " + path.string());
  }
  CheckpointData ckpt;
  ckpt.config_json = detail::get_string(is);
  ckpt.seed = detail::get_u64(is);
  ckpt.step = detail::get_i64(is);
  const auto n = detail::get_u64(is);
  ckpt.tensors.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    auto name = detail::get_string(is);
    ckpt.tensors.emplace_back(std::move(name), detail::get_matrix(is));
  }
  ckpt.has_optimizer = detail::get_u32(is) != 0;
  if (ckpt.has_optimizer) {
    ckpt.adam_t = detail::get_i64(is);
    const auto nm = detail::get_u64(is);
    for (std::uint64_t i = 0; i < nm; ++i) {
      auto name = detail::get_string(is);
      ckpt.adam_m.emplace_back(std::move(name), detail::get_matrix(is));
    }
    const auto nv = detail::get_u64(is);
    for (std::uint64_t i = 0; i < nv; ++i) {
      auto name = detail::get_string(is);
      ckpt.adam_v.emplace_back(std::move(name), detail::get_matrix(is));
    }
  }
  if (!is) throw std::runtime_error("truncated checkpoint: " + path.string());
  return ckpt;
}

/// Array container for per-level heatmaps: named (nodes x 4) matrices under
/// keys "level_1".."level_K" and "main". Values round-trip bit-exactly.
inline void save_heatmap_container(const std::filesystem::path& path,
                                   const NamedMatrices& arrays) {
  atomic_write(path, [&](std::ostream& os) {
    detail::put_u32(os, kHeatmapMagic);
    detail::put_u32(os, 1);
    detail::put_u64(os, arrays.size());
    for (const auto& [name, m] : arrays) {
      detail::put_string(os, name);
      detail::put_matrix(os, m);
    }
  });
}

inline NamedMatrices load_heatmap_container(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open heatmap container: " + path.string());
  if (detail::get_u32(is) != kHeatmapMagic) {
    throw std::runtime_error("not a heatmap container: " + path.string());
  }
  if (detail::get_u32(is) != 1) {
    throw std::runtime_error("unsupported container version: " + path.string());
  }
  const auto n = detail::get_u64(is);
  NamedMatrices arrays;
  arrays.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    auto name = detail::get_string(is);
    arrays.emplace_back(std::move(name), detail::get_matrix(is));
  }
  if (!is) throw std::runtime_error("truncated heatmap container: " + path.string());
  return arrays;
}

}  // namespace lvmark
