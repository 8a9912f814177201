#pragma once

#include "contextprobe/model.hpp"
#include "contextprobe/scenegen.hpp"
#include "contextprobe/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace contextprobe {

// Binary raster formats, all little-endian, seekable, language-neutral:
//   CPR1  images  — magic, u32 H, W, C, then f32 interleaved row-major
//                   (index = (r*W + c)*C + ch)
//   CPL1  labels  — magic, u32 H, W, then u16 row-major; 0xFFFF = ignore
//   CPM1  masks   — magic, u32 H, W, then bits row-major, LSB-first per byte
//   CPW1  weights — magic, arch descriptor header, then f32 parameter array

void write_image(const std::filesystem::path& path, const Image& image);
Image read_image(const std::filesystem::path& path);

void write_labels(const std::filesystem::path& path, const LabelPlane& labels);
LabelPlane read_labels(const std::filesystem::path& path);

void write_mask(const std::filesystem::path& path, const MaskPlane& mask);
MaskPlane read_mask(const std::filesystem::path& path);

/// Parameters are truncated to 32-bit floats on write.
void save_checkpoint(const std::filesystem::path& path, const ParamVec& params);
ParamVec load_checkpoint(const std::filesystem::path& path);

/// Writes manifest.json plus per-scene image/label/mask rasters under
/// `dir`/scenes. Byte-identical for identical datasets.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// FNV-1a hashing used for ids and byte-identity checks.
std::uint64_t fnv1a(const void* data, std::size_t n,
                    std::uint64_t seed = 0xCBF29CE484222325ull);
std::string hex64(std::uint64_t v);
std::uint64_t hash_file(const std::filesystem::path& path);
/// Order-independent content hash of every regular file under `dir`.
std::uint64_t hash_directory(const std::filesystem::path& dir);

}  // namespace contextprobe
