#include <cstring>
#include <fstream>

#include "airwaytopo/volume_io.hpp"
#include "airwaytopo/voxel_grid.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace airway;
using airway::test::TempDir;

namespace {

template <typename T>
void put(std::vector<char>& buf, std::size_t off, T v) {
  std::memcpy(buf.data() + off, &v, sizeof(T));
}

// Hand-written minimal NIfTI-1 file, independent of the production writer.
std::vector<char> make_nifti_bytes(std::int16_t datatype, std::int16_t bitpix,
                                   int d, int h, int w,
                                   const std::vector<char>& body) {
  std::vector<char> buf(352, 0);
  put<std::int32_t>(buf, 0, 348);                       // sizeof_hdr
  put<std::int16_t>(buf, 40, 3);                        // dim[0]
  put<std::int16_t>(buf, 42, static_cast<std::int16_t>(w));  // dim[1] = x
  put<std::int16_t>(buf, 44, static_cast<std::int16_t>(h));  // dim[2] = y
  put<std::int16_t>(buf, 46, static_cast<std::int16_t>(d));  // dim[3] = z
  for (int i = 4; i <= 7; ++i)
    put<std::int16_t>(buf, 40 + 2 * i, 1);
  put<std::int16_t>(buf, 70, datatype);
  put<std::int16_t>(buf, 72, bitpix);
  put<float>(buf, 76, 1.0f);    // pixdim[0]
  put<float>(buf, 80, 0.5f);    // pixdim[1] = dx
  put<float>(buf, 84, 0.7f);    // pixdim[2] = dy
  put<float>(buf, 88, 1.25f);   // pixdim[3] = dz
  put<float>(buf, 108, 352.0f); // vox_offset
  std::memcpy(buf.data() + 344, "n+1\0", 4);
  buf.insert(buf.end(), body.begin(), body.end());
  return buf;
}

void write_file(const std::filesystem::path& p, const std::vector<char>& buf) {
  std::ofstream out(p, std::ios::binary);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

}  // namespace

TEST_CASE("VoxelGrid construction validates invariants") {
  CHECK_THROWS_AS(VoxelGrid({0, 2, 2}, Spacing{}, GridKind::Binary),
                  AirwayError);
  CHECK_THROWS_AS(VoxelGrid({2, 2, 2}, Spacing{0.0, 1.0, 1.0},
                            GridKind::Binary),
                  AirwayError);
  CHECK_THROWS_AS(
      VoxelGrid({2, 2, 2}, Spacing{}, GridKind::Binary, std::vector<float>(7)),
      AirwayError);

  VoxelGrid ok({2, 3, 4}, Spacing{}, GridKind::Intensity);
  CHECK(ok.size() == 24);
  CHECK(ok.index(1, 2, 3) == 23);
  CHECK(ok.coord(23) == VoxelCoord{1, 2, 3});
}

TEST_CASE("VoxelGrid::validate enforces kind contracts") {
  VoxelGrid p({1, 1, 2}, Spacing{}, GridKind::Probability);
  p.set_linear(0, 0.5f);
  CHECK_NOTHROW(p.validate());
  p.set_linear(1, 1.5f);
  CHECK_THROWS_AS(p.validate(), AirwayError);

  VoxelGrid b({1, 1, 2}, Spacing{}, GridKind::Binary);
  b.set_linear(0, 1.0f);
  CHECK_NOTHROW(b.validate());
  b.set_linear(1, 0.5f);
  CHECK_THROWS_AS(b.validate(), AirwayError);
}

TEST_CASE("load_volume reads a hand-written int16 NIfTI fixture") {
  TempDir tmp;
  const int d = 2, h = 3, w = 4;
  std::vector<char> body(static_cast<std::size_t>(d * h * w) * 2);
  for (int i = 0; i < d * h * w; ++i)
    put<std::int16_t>(body, static_cast<std::size_t>(i) * 2,
                      static_cast<std::int16_t>(i * 3 - 5));
  write_file(tmp.file("fixture.nii"), make_nifti_bytes(4, 16, d, h, w, body));

  VoxelGrid g = load_volume(tmp.file("fixture.nii"));
  CHECK(g.dims() == Dims{2, 3, 4});
  CHECK(g.spacing().dz == doctest::Approx(1.25));
  CHECK(g.spacing().dy == doctest::Approx(static_cast<double>(0.7f)));
  CHECK(g.spacing().dx == doctest::Approx(0.5));
  CHECK(g.kind() == GridKind::Intensity);
  for (int i = 0; i < d * h * w; ++i)
    CHECK(g[i] == static_cast<float>(i * 3 - 5));
}

TEST_CASE("load_volume error taxonomy") {
  TempDir tmp;

  SUBCASE("truncated body is CorruptHeader") {
    std::vector<char> body(10, 0);  // header promises 2*3*4 int16 = 48 bytes
    write_file(tmp.file("trunc.nii"), make_nifti_bytes(4, 16, 2, 3, 4, body));
    CHECK_THROWS_WITH_AS(static_cast<void>(load_volume(tmp.file("trunc.nii"))),
                         doctest::Contains("shorter"), AirwayError);
    try {
      static_cast<void>(load_volume(tmp.file("trunc.nii")));
    } catch (const AirwayError& e) {
      CHECK(e.code() == ErrorCode::CorruptHeader);
    }
  }

  SUBCASE("unrecognized magic is UnsupportedFormat") {
    write_file(tmp.file("junk.nii"), std::vector<char>(400, 'A'));
    try {
      static_cast<void>(load_volume(tmp.file("junk.nii")));
      FAIL("expected throw");
    } catch (const AirwayError& e) {
      CHECK(e.code() == ErrorCode::UnsupportedFormat);
    }
  }

  SUBCASE("unknown extension is UnsupportedFormat") {
    write_file(tmp.file("vol.xyz"), std::vector<char>(400, 'A'));
    try {
      static_cast<void>(load_volume(tmp.file("vol.xyz")));
      FAIL("expected throw");
    } catch (const AirwayError& e) {
      CHECK(e.code() == ErrorCode::UnsupportedFormat);
    }
  }

  SUBCASE("int32 voxels are UnsupportedDatatype") {
    std::vector<char> body(static_cast<std::size_t>(2 * 3 * 4) * 4, 0);
    write_file(tmp.file("i32.nii"), make_nifti_bytes(8, 32, 2, 3, 4, body));
    try {
      static_cast<void>(load_volume(tmp.file("i32.nii")));
      FAIL("expected throw");
    } catch (const AirwayError& e) {
      CHECK(e.code() == ErrorCode::UnsupportedDatatype);
    }
  }

  SUBCASE("nonpositive dim is CorruptHeader") {
    std::vector<char> body;
    write_file(tmp.file("dim0.nii"), make_nifti_bytes(4, 16, 0, 3, 4, body));
    try {
      static_cast<void>(load_volume(tmp.file("dim0.nii")));
      FAIL("expected throw");
    } catch (const AirwayError& e) {
      CHECK(e.code() == ErrorCode::CorruptHeader);
    }
  }
}

TEST_CASE("save/load round-trips are exact") {
  TempDir tmp;

  SUBCASE("Binary via .nii") {
    VoxelGrid g = test::random_binary({3, 4, 5}, 0.4, 11);
    save_volume(g, tmp.file("b.nii"));
    VoxelGrid r = load_volume(tmp.file("b.nii"));
    CHECK(r.dims() == g.dims());
    CHECK(r.kind() == GridKind::Binary);
    CHECK(r.values() == g.values());
  }

  SUBCASE("Probability via .nii.gz") {
    VoxelGrid g = test::random_probability({4, 5, 6}, 12);
    save_volume(g, tmp.file("p.nii.gz"));
    VoxelGrid r = load_volume(tmp.file("p.nii.gz"));
    CHECK(r.kind() == GridKind::Probability);
    CHECK(r.values() == g.values());
  }

  SUBCASE("Intensity via raw sidecar, loadable from either file") {
    VoxelGrid g({2, 3, 4}, Spacing{1.0, 0.8, 0.6}, GridKind::Intensity);
    for (std::int64_t i = 0; i < g.size(); ++i)
      g.set_linear(i, static_cast<float>(i) - 7.5f);
    save_volume(g, tmp.file("v.json"));
    for (const char* name : {"v.json", "v.bin"}) {
      VoxelGrid r = load_volume(tmp.file(name));
      CHECK(r.dims() == g.dims());
      CHECK(r.spacing() == g.spacing());
      CHECK(r.kind() == GridKind::Intensity);
      CHECK(r.values() == g.values());
    }
  }

  SUBCASE("128-cubed Probability grid round-trips with zero diff") {
    VoxelGrid g = test::random_probability({128, 128, 128}, 13);
    save_volume(g, tmp.file("big.nii"));
    VoxelGrid r = load_volume(tmp.file("big.nii"));
    CHECK(r.values() == g.values());
  }

  SUBCASE("all-zero Binary grid loads back all zeros") {
    VoxelGrid g({3, 3, 3}, Spacing{}, GridKind::Binary);
    save_volume(g, tmp.file("z.nii"));
    VoxelGrid r = load_volume(tmp.file("z.nii"));
    CHECK(r.count_foreground() == 0);
    CHECK(r.kind() == GridKind::Binary);
  }
}

TEST_CASE("truncate_normalize maps HU windows to [0,1]") {
  VoxelGrid g({1, 1, 3}, Spacing{}, GridKind::Intensity,
              std::vector<float>{-1000.0f, -250.0f, 2000.0f});

  VoxelGrid a = truncate_normalize(g, -1000.0, 500.0);
  CHECK(a.kind() == GridKind::Probability);
  CHECK(a[0] == 0.0f);
  CHECK(a[1] == 0.5f);
  CHECK(a[2] == 1.0f);

  VoxelGrid b = truncate_normalize(g, -1024.0, 1024.0);
  CHECK(b[2] == 1.0f);  // 2000 HU clamps at the top of the window

  CHECK_THROWS_AS(static_cast<void>(truncate_normalize(g, 500.0, -1000.0)),
                  AirwayError);
  try {
    static_cast<void>(truncate_normalize(g, 1.0, 1.0));
  } catch (const AirwayError& e) {
    CHECK(e.code() == ErrorCode::DegenerateRange);
  }
}

TEST_CASE("truncate_normalize is idempotent on normalized grids") {
  VoxelGrid g = test::random_probability({3, 3, 3}, 14);
  VoxelGrid once = truncate_normalize(g.with_kind(GridKind::Intensity), 0.0, 1.0);
  VoxelGrid twice = truncate_normalize(once.with_kind(GridKind::Intensity), 0.0, 1.0);
  CHECK(once.values() == twice.values());
}
