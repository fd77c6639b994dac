#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "lesion/dataset.hpp"

namespace lesion {

inline constexpr std::size_t kPatchSize = 120;  // pixels, 1 mm each
inline constexpr std::size_t kPatchChannels = 3;
inline constexpr std::size_t kPatchPixels = kPatchChannels * kPatchSize * kPatchSize;
inline constexpr double kSliceIntervalMm = 2.0;
inline constexpr float kAirHu = -1024.0f;
inline constexpr float kMaxHu = 3071.0f;

struct Spacing {
  double x = 1, y = 1, z = 1;
};

struct Point3 {
  double x = 0, y = 0, z = 0;
};

// CT volume in HU, indexed (z, y, x). origin_mm is the centre of voxel 0.
struct Volume {
  std::size_t nz = 0, ny = 0, nx = 0;
  Spacing spacing_mm;
  Point3 origin_mm;
  std::vector<float> voxels;

  float at(std::size_t z, std::size_t y, std::size_t x) const { return voxels[(z * ny + y) * nx + x]; }
  float& at(std::size_t z, std::size_t y, std::size_t x) { return voxels[(z * ny + y) * nx + x]; }
  void validate() const;
};

// Single axial image at 1 mm/pixel; origin is the centre of pixel (0, 0).
struct Image {
  std::size_t height = 0, width = 0;
  double origin_x = 0, origin_y = 0;
  std::vector<float> pixels;

  float at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
};

struct Patch {
  std::vector<float> pixels = std::vector<float>(kPatchPixels, 0.0f);  // (channel, y, x)
  double center_x_mm = 0, center_y_mm = 0;
  Box lesion_bbox_px;

  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * kPatchSize + y) * kPatchSize + x];
  }
};

// Bilinear resampling of every axial slice to 1 mm in x and y. Output pixel j
// samples input coordinate (j + 0.5) / spacing - 0.5, clamped to the grid,
// so 1 mm input is reproduced exactly.
Volume resample_inplane(const Volume& v);

// Axial planes at center_z - 2 mm, center_z, center_z + 2 mm, linearly
// interpolated between stored slices and clamped at the ends.
std::array<Image, 3> extract_slices(const Volume& v, double center_z_mm);

// 120x120 crop whose pixel (60, 60) is the image pixel nearest the centre;
// outside samples are -1024 HU. `bbox_mm` (same frame as the images) is
// mapped into patch pixels and clamped.
Patch crop_patch(const std::array<Image, 3>& images, double center_x_mm, double center_y_mm,
                 const Box& bbox_mm);

float normalize_hu(float hu);
// Clips to [-1024, 3071] HU and maps linearly onto [0, 1].
void normalize_intensity(Patch& p);

// Full chain for a volume-backed record: resample, extract, crop around the
// bbox centre, normalise.
Patch make_patch(const Volume& v, const Box& bbox_mm, double slice_mm);

// Raw int16 little-endian voxels plus a JSON sidecar next to it
// (extension replaced by .json): {dims:[z,y,x], spacing_mm:[x,y,z], origin_mm?}.
Volume load_volume(const std::filesystem::path& raw_path);
void save_volume(const std::filesystem::path& raw_path, const Volume& v);

}  // namespace lesion
