#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "lesion/error.hpp"
#include "lesion/preprocess.hpp"

using namespace lesion;

namespace {

Volume make_volume(std::size_t nz, std::size_t ny, std::size_t nx, Spacing sp,
                   const std::function<float(std::size_t, std::size_t, std::size_t)>& f) {
  Volume v;
  v.nz = nz;
  v.ny = ny;
  v.nx = nx;
  v.spacing_mm = sp;
  v.voxels.resize(nz * ny * nx);
  for (std::size_t z = 0; z < nz; ++z) {
    for (std::size_t y = 0; y < ny; ++y) {
      for (std::size_t x = 0; x < nx; ++x) v.at(z, y, x) = f(z, y, x);
    }
  }
  return v;
}

std::array<Image, 3> same_image(std::size_t h, std::size_t w,
                                const std::function<float(std::size_t, std::size_t)>& f) {
  Image img;
  img.height = h;
  img.width = w;
  img.pixels.resize(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) img.pixels[y * w + x] = f(y, x);
  }
  return {img, img, img};
}

}  // namespace

TEST(Resample, OneMillimetreIsIdentity) {
  const Volume v = make_volume(2, 7, 9, {1, 1, 2.5}, [](auto z, auto y, auto x) {
    return static_cast<float>(z * 1000 + y * 37 + x * x);
  });
  const Volume r = resample_inplane(v);
  EXPECT_EQ(r.nx, v.nx);
  EXPECT_EQ(r.ny, v.ny);
  EXPECT_EQ(r.voxels, v.voxels);
}

TEST(Resample, ConstantAtTwoMillimetres) {
  const Volume v = make_volume(1, 6, 5, {2, 2, 1}, [](auto, auto, auto) { return 42.0f; });
  const Volume r = resample_inplane(v);
  EXPECT_EQ(r.nx, 10u);
  EXPECT_EQ(r.ny, 12u);
  EXPECT_DOUBLE_EQ(r.spacing_mm.x, 1.0);
  EXPECT_DOUBLE_EQ(r.spacing_mm.y, 1.0);
  for (float x : r.voxels) EXPECT_EQ(x, 42.0f);
}

TEST(Resample, HalfMillimetreRampMatchesBilinear) {
  // Input value at index (y, x) is 3x - 2y + 5; output pixel (i, j) samples
  // input coordinate (2i + 0.5, 2j + 0.5).
  const Volume v = make_volume(1, 40, 50, {0.5, 0.5, 1}, [](auto, auto y, auto x) {
    return static_cast<float>(3.0 * x - 2.0 * y + 5.0);
  });
  const Volume r = resample_inplane(v);
  ASSERT_EQ(r.nx, 25u);
  ASSERT_EQ(r.ny, 20u);
  for (std::size_t i = 0; i < r.ny; ++i) {
    for (std::size_t j = 0; j < r.nx; ++j) {
      const double u = 2.0 * j + 0.5, w = 2.0 * i + 0.5;
      EXPECT_NEAR(r.at(0, i, j), 3.0 * u - 2.0 * w + 5.0, 1e-4);
    }
  }
  // Physical extent is preserved: same first edge, same width.
  EXPECT_NEAR(r.origin_mm.x - 0.5, v.origin_mm.x - 0.25, 1e-12);
  EXPECT_NEAR(r.nx * r.spacing_mm.x, v.nx * v.spacing_mm.x, 1.0);
}

TEST(Resample, AnisotropicSpacingKeepsExtent) {
  const Volume v = make_volume(1, 33, 17, {0.7, 1.3, 1}, [](auto, auto y, auto x) { return float(x + y); });
  const Volume r = resample_inplane(v);
  EXPECT_LE(std::abs(double(r.nx) - 17 * 0.7), 1.0);
  EXPECT_LE(std::abs(double(r.ny) - 33 * 1.3), 1.0);
}

TEST(Slices, TwoMillimetreSpacingReturnsStoredSlices) {
  const Volume v = make_volume(5, 3, 3, {1, 1, 2}, [](auto z, auto, auto) { return float(z * 10); });
  const auto planes = extract_slices(v, 4.0);
  EXPECT_EQ(planes[0].pixels, std::vector<float>(9, 10.0f));
  EXPECT_EQ(planes[1].pixels, std::vector<float>(9, 20.0f));
  EXPECT_EQ(planes[2].pixels, std::vector<float>(9, 30.0f));
}

TEST(Slices, FourMillimetreSpacingBlends) {
  const Volume v = make_volume(4, 2, 2, {1, 1, 4}, [](auto z, auto y, auto x) { return float(z * z * 8 + y + x); });
  const auto planes = extract_slices(v, 8.0);  // slice k = 2
  for (std::size_t p = 0; p < 4; ++p) {
    const float base = static_cast<float>(p / 2 + p % 2);
    EXPECT_FLOAT_EQ(planes[0].pixels[p], 0.5f * (8 + base) + 0.5f * (32 + base));
    EXPECT_FLOAT_EQ(planes[1].pixels[p], 32 + base);
    EXPECT_FLOAT_EQ(planes[2].pixels[p], 0.5f * (32 + base) + 0.5f * (72 + base));
  }
}

TEST(Slices, ClampAtTheEndsAndRejectOutside) {
  const Volume v = make_volume(3, 1, 1, {1, 1, 2}, [](auto z, auto, auto) { return float(z); });
  const auto top = extract_slices(v, 4.0);
  EXPECT_EQ(top[2].pixels[0], 2.0f);
  EXPECT_EQ(top[1].pixels[0], 2.0f);
  const auto bottom = extract_slices(v, 0.0);
  EXPECT_EQ(bottom[0].pixels[0], 0.0f);
  EXPECT_THROW(extract_slices(v, 4.5), DataError);
  EXPECT_THROW(extract_slices(v, -0.5), DataError);
}

TEST(Crop, InteriorCropHasNoPadding) {
  const auto imgs = same_image(240, 240, [](auto y, auto x) { return float(y * 1000 + x); });
  const Patch p = crop_patch(imgs, 120, 120, {110, 110, 130, 130});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < kPatchSize; ++y) {
      for (std::size_t x = 0; x < kPatchSize; ++x) ASSERT_EQ(p.at(c, y, x), float((y + 60) * 1000 + (x + 60)));
    }
  }
  EXPECT_EQ(p.at(0, 60, 60), 120 * 1000 + 120.0f);
  // Box edges shift by the crop offset; pixel i covers [i, i + 1).
  EXPECT_DOUBLE_EQ(p.lesion_bbox_px.x0, 110 - 60 + 0.5);
  EXPECT_DOUBLE_EQ(p.lesion_bbox_px.x1, 130 - 60 + 0.5);
}

TEST(Crop, CornerPadsWithAir) {
  const auto imgs = same_image(100, 100, [](auto, auto) { return 7.0f; });
  const Patch a = crop_patch(imgs, 0, 0, {0, 0, 5, 5});
  std::size_t air = 0, inside = 0;
  for (std::size_t y = 0; y < kPatchSize; ++y) {
    for (std::size_t x = 0; x < kPatchSize; ++x) {
      const float v = a.at(1, y, x);
      if (y >= 60 && x >= 60) {
        ++inside;
        EXPECT_EQ(v, 7.0f);
      } else {
        ++air;
        EXPECT_EQ(v, kAirHu);
      }
    }
  }
  EXPECT_EQ(inside, 60u * 60u);
  EXPECT_EQ(air, 3u * 60u * 60u);
  const Patch b = crop_patch(imgs, 0, 0, {0, 0, 5, 5});
  EXPECT_EQ(a.pixels, b.pixels);
}

TEST(Normalize, Endpoints) {
  EXPECT_EQ(normalize_hu(-1024.0f), 0.0f);
  EXPECT_EQ(normalize_hu(3071.0f), 1.0f);
  EXPECT_NEAR(normalize_hu(0.0f), 1024.0 / 4095.0, 1e-7);
  EXPECT_NEAR(1024.0 / 4095.0, 0.2501, 1e-4);
  EXPECT_EQ(normalize_hu(-3000.0f), 0.0f);
  EXPECT_EQ(normalize_hu(5000.0f), 1.0f);
}

TEST(MakePatch, ShapeRangeAndTranslation) {
  // 0.8 mm ramp volume; shifting the physical centre by whole millimetres
  // shifts the patch content by the same number of pixels.
  const Volume v = make_volume(5, 300, 300, {0.8, 0.8, 2.0}, [](auto z, auto y, auto x) {
    return static_cast<float>(-900.0 + 5.0 * x + 3.0 * y + 20.0 * z);
  });
  const Box box{100, 100, 110, 110};
  const Patch p = make_patch(v, box, 4.0);
  ASSERT_EQ(p.pixels.size(), 3u * 120u * 120u);
  for (float x : p.pixels) ASSERT_TRUE(x >= 0.0f && x <= 1.0f);
  const Volume iso = resample_inplane(v);
  EXPECT_DOUBLE_EQ(iso.spacing_mm.x, 1.0);
  EXPECT_DOUBLE_EQ(iso.spacing_mm.y, 1.0);

  for (auto [dx, dy] : {std::pair{3, 0}, std::pair{0, -4}, std::pair{7, 5}}) {
    const Box moved{box.x0 + dx, box.y0 + dy, box.x1 + dx, box.y1 + dy};
    const Patch q = make_patch(v, moved, 4.0);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 20; y < 100; ++y) {
        for (std::size_t x = 20; x < 100; ++x) {
          ASSERT_NEAR(q.at(c, y, x), p.at(c, y + dy, x + dx), 1e-6) << dx << "," << dy;
        }
      }
    }
    EXPECT_NEAR(q.lesion_bbox_px.x0, p.lesion_bbox_px.x0, 1e-9);
  }
}

TEST(VolumeIo, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "lesion_volume_io";
  std::filesystem::create_directories(dir);
  Volume v = make_volume(3, 4, 5, {0.7, 0.9, 2.5},
                         [](auto z, auto y, auto x) { return float(int(z * 100 + y * 10 + x) - 1024); });
  v.origin_mm = {-10.5, 3.25, 7};
  save_volume(dir / "v.raw", v);
  const Volume back = load_volume(dir / "v.raw");
  EXPECT_EQ(back.nz, 3u);
  EXPECT_EQ(back.ny, 4u);
  EXPECT_EQ(back.nx, 5u);
  EXPECT_DOUBLE_EQ(back.spacing_mm.x, 0.7);
  EXPECT_DOUBLE_EQ(back.spacing_mm.z, 2.5);
  EXPECT_DOUBLE_EQ(back.origin_mm.x, -10.5);
  EXPECT_EQ(back.voxels, v.voxels);
  std::filesystem::remove_all(dir);
}
