#include "lesion/preprocess.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>

#include <json.hpp>

#include "lesion/error.hpp"

namespace lesion {

void Volume::validate() const {
  if (nz == 0 || ny == 0 || nx == 0) throw DataError("volume has an empty dimension");
  if (!(spacing_mm.x > 0 && spacing_mm.y > 0 && spacing_mm.z > 0)) {
    throw DataError("volume spacing must be positive");
  }
  if (voxels.size() != nz * ny * nx) throw DataError("volume voxel count does not match dims");
}

namespace {

struct Tap {
  std::size_t lo, hi;
  double frac;
};

// Linear interpolation weights for output sample j on an axis of n input
// samples with the given input spacing (mm) and 1 mm output spacing.
Tap axis_tap(std::size_t j, std::size_t n, double spacing) {
  double u = (static_cast<double>(j) + 0.5) / spacing - 0.5;
  u = std::clamp(u, 0.0, static_cast<double>(n - 1));
  const auto lo = static_cast<std::size_t>(std::floor(u));
  const std::size_t hi = std::min(lo + 1, n - 1);
  return {lo, hi, u - static_cast<double>(lo)};
}

}  // namespace

Volume resample_inplane(const Volume& v) {
  v.validate();
  Volume out;
  out.nz = v.nz;
  out.nx = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(v.nx) * v.spacing_mm.x)));
  out.ny = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(v.ny) * v.spacing_mm.y)));
  out.spacing_mm = {1.0, 1.0, v.spacing_mm.z};
  out.origin_mm = {v.origin_mm.x - 0.5 * v.spacing_mm.x + 0.5, v.origin_mm.y - 0.5 * v.spacing_mm.y + 0.5,
                   v.origin_mm.z};
  out.voxels.resize(out.nz * out.ny * out.nx);

  std::vector<Tap> xs(out.nx), ys(out.ny);
  for (std::size_t j = 0; j < out.nx; ++j) xs[j] = axis_tap(j, v.nx, v.spacing_mm.x);
  for (std::size_t i = 0; i < out.ny; ++i) ys[i] = axis_tap(i, v.ny, v.spacing_mm.y);

  for (std::size_t z = 0; z < v.nz; ++z) {
    for (std::size_t i = 0; i < out.ny; ++i) {
      const Tap& ty = ys[i];
      for (std::size_t j = 0; j < out.nx; ++j) {
        const Tap& tx = xs[j];
        const double top = (1 - tx.frac) * v.at(z, ty.lo, tx.lo) + tx.frac * v.at(z, ty.lo, tx.hi);
        const double bottom = (1 - tx.frac) * v.at(z, ty.hi, tx.lo) + tx.frac * v.at(z, ty.hi, tx.hi);
        out.at(z, i, j) = static_cast<float>((1 - ty.frac) * top + ty.frac * bottom);
      }
    }
  }
  return out;
}

std::array<Image, 3> extract_slices(const Volume& v, double center_z_mm) {
  v.validate();
  const double z_last = v.origin_mm.z + static_cast<double>(v.nz - 1) * v.spacing_mm.z;
  const double tol = 1e-6 * v.spacing_mm.z;
  if (center_z_mm < v.origin_mm.z - tol || center_z_mm > z_last + tol) {
    throw DataError("slice position " + std::to_string(center_z_mm) + " mm lies outside the volume");
  }
  std::array<Image, 3> planes;
  const std::size_t plane = v.ny * v.nx;
  for (int k = 0; k < 3; ++k) {
    const double z = center_z_mm + (k - 1) * kSliceIntervalMm;
    double t = (z - v.origin_mm.z) / v.spacing_mm.z;
    t = std::clamp(t, 0.0, static_cast<double>(v.nz - 1));
    auto lo = static_cast<std::size_t>(std::floor(t));
    double frac = t - static_cast<double>(lo);
    if (frac < 1e-9) frac = 0.0;
    if (frac > 1 - 1e-9) {
      ++lo;
      frac = 0.0;
    }
    const std::size_t hi = std::min(lo + 1, v.nz - 1);
    Image& img = planes[k];
    img.height = v.ny;
    img.width = v.nx;
    img.origin_x = v.origin_mm.x;
    img.origin_y = v.origin_mm.y;
    img.pixels.resize(plane);
    const float* a = v.voxels.data() + lo * plane;
    const float* b = v.voxels.data() + hi * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      img.pixels[p] = frac == 0.0 ? a[p] : static_cast<float>((1 - frac) * a[p] + frac * b[p]);
    }
  }
  return planes;
}

Patch crop_patch(const std::array<Image, 3>& images, double center_x_mm, double center_y_mm,
                 const Box& bbox_mm) {
  const Image& ref = images[0];
  for (const auto& img : images) {
    if (img.height != ref.height || img.width != ref.width || img.pixels.size() != img.height * img.width) {
      throw std::invalid_argument("crop_patch: images differ in shape");
    }
  }
  const long half = static_cast<long>(kPatchSize / 2);
  const long cx = std::lround(center_x_mm - ref.origin_x);
  const long cy = std::lround(center_y_mm - ref.origin_y);
  const long x_first = cx - half, y_first = cy - half;

  Patch p;
  p.center_x_mm = center_x_mm;
  p.center_y_mm = center_y_mm;
  for (std::size_t c = 0; c < kPatchChannels; ++c) {
    const Image& img = images[c];
    for (std::size_t r = 0; r < kPatchSize; ++r) {
      const long y = y_first + static_cast<long>(r);
      float* row = p.pixels.data() + (c * kPatchSize + r) * kPatchSize;
      for (std::size_t col = 0; col < kPatchSize; ++col) {
        const long x = x_first + static_cast<long>(col);
        const bool inside = y >= 0 && x >= 0 && y < static_cast<long>(img.height) && x < static_cast<long>(img.width);
        row[col] = inside ? img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) : kAirHu;
      }
    }
  }
  // Pixel i covers [i, i+1) in the patch frame; image pixel centres sit at origin + index.
  const double shift_x = ref.origin_x - 0.5 + static_cast<double>(x_first);
  const double shift_y = ref.origin_y - 0.5 + static_cast<double>(y_first);
  const double size = static_cast<double>(kPatchSize);
  p.lesion_bbox_px = {std::clamp(bbox_mm.x0 - shift_x, 0.0, size), std::clamp(bbox_mm.y0 - shift_y, 0.0, size),
                      std::clamp(bbox_mm.x1 - shift_x, 0.0, size), std::clamp(bbox_mm.y1 - shift_y, 0.0, size)};
  return p;
}

float normalize_hu(float hu) {
  const float clipped = std::clamp(hu, kAirHu, kMaxHu);
  return (clipped - kAirHu) / (kMaxHu - kAirHu);
}

void normalize_intensity(Patch& p) {
  for (auto& v : p.pixels) v = normalize_hu(v);
}

Patch make_patch(const Volume& v, const Box& bbox_mm, double slice_mm) {
  const Volume iso = resample_inplane(v);
  const auto planes = extract_slices(iso, slice_mm);
  Patch p = crop_patch(planes, bbox_mm.center_x(), bbox_mm.center_y(), bbox_mm);
  normalize_intensity(p);
  return p;
}

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& raw) {
  auto p = raw;
  p.replace_extension(".json");
  return p;
}

}  // namespace

Volume load_volume(const std::filesystem::path& raw_path) {
  std::ifstream meta_in(sidecar_path(raw_path));
  if (!meta_in) throw DataError("cannot open volume sidecar " + sidecar_path(raw_path).string());
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("volume sidecar " + sidecar_path(raw_path).string() + ": " + e.what());
  }
  Volume v;
  try {
    const auto dims = meta.at("dims").get<std::vector<std::size_t>>();
    const auto sp = meta.at("spacing_mm").get<std::vector<double>>();
    if (dims.size() != 3 || sp.size() != 3) throw DataError("volume sidecar needs 3 dims and 3 spacings");
    v.nz = dims[0];
    v.ny = dims[1];
    v.nx = dims[2];
    v.spacing_mm = {sp[0], sp[1], sp[2]};
    if (meta.contains("origin_mm")) {
      const auto o = meta["origin_mm"].get<std::vector<double>>();
      if (o.size() != 3) throw DataError("origin_mm needs 3 values");
      v.origin_mm = {o[0], o[1], o[2]};
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("volume sidecar " + sidecar_path(raw_path).string() + ": " + e.what());
  }

  const std::size_t n = v.nz * v.ny * v.nx;
  std::ifstream in(raw_path, std::ios::binary);
  if (!in) throw DataError("cannot open volume " + raw_path.string());
  std::vector<unsigned char> bytes(n * 2);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw DataError("volume " + raw_path.string() + " is shorter than its dims");
  }
  v.voxels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto raw = static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
    v.voxels[i] = static_cast<float>(static_cast<std::int16_t>(raw));
  }
  v.validate();
  return v;
}

void save_volume(const std::filesystem::path& raw_path, const Volume& v) {
  v.validate();
  std::ofstream out(raw_path, std::ios::binary);
  if (!out) throw DataError("cannot write volume " + raw_path.string());
  for (float f : v.voxels) {
    const auto hu = static_cast<std::int16_t>(std::lround(std::clamp(f, -32768.0f, 32767.0f)));
    const auto u = static_cast<std::uint16_t>(hu);
    const char bytes[2] = {static_cast<char>(u & 0xff), static_cast<char>(u >> 8)};
    out.write(bytes, 2);
  }
  nlohmann::json meta = {{"dims", {v.nz, v.ny, v.nx}},
                         {"spacing_mm", {v.spacing_mm.x, v.spacing_mm.y, v.spacing_mm.z}},
                         {"origin_mm", {v.origin_mm.x, v.origin_mm.y, v.origin_mm.z}}};
  std::ofstream(sidecar_path(raw_path)) << meta.dump() << '\n';
}

}  // namespace lesion
