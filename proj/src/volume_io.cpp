#include "airwaytopo/volume_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

namespace airway {
namespace {

// NIfTI-1 348-byte header, little-endian on disk. Only the fields this
// reader/writer touches are documented; the rest are carried verbatim.
#pragma pack(push, 1)
struct Nifti1Header {
  std::int32_t sizeof_hdr;  // 348
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];  // dim[1]=x, dim[2]=y, dim[3]=z
  float intent_p1;
  float intent_p2;
  float intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;  // 2=uint8, 4=int16, 16=float32
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];  // pixdim[1]=dx, [2]=dy, [3]=dz
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max;
  float cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax;
  std::int32_t glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code;
  std::int16_t sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4];
  float srow_y[4];
  float srow_z[4];
  char intent_name[16];
  char magic[4];  // "n+1\0"
};
#pragma pack(pop)

static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must pack to 348");

constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// gzread handles both gzip-compressed and plain files, so one read path
// covers .nii and .nii.gz.
class GzReader {
 public:
  explicit GzReader(const std::filesystem::path& path) {
    file_ = gzopen(path.string().c_str(), "rb");
    if (!file_)
      throw AirwayError(ErrorCode::IoFailure,
                        "cannot open '" + path.string() + "'");
  }
  ~GzReader() {
    if (file_) gzclose(file_);
  }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  std::size_t read(void* dst, std::size_t bytes) {
    const int got = gzread(file_, dst, static_cast<unsigned>(bytes));
    return got < 0 ? 0 : static_cast<std::size_t>(got);
  }

  void skip(std::size_t bytes) {
    std::vector<char> sink(std::min<std::size_t>(bytes, 1 << 16));
    while (bytes > 0) {
      const std::size_t chunk = std::min(bytes, sink.size());
      if (read(sink.data(), chunk) != chunk)
        throw AirwayError(ErrorCode::CorruptHeader,
                          "file ends before vox_offset");
      bytes -= chunk;
    }
  }

 private:
  gzFile file_ = nullptr;
};

VoxelGrid load_nifti(const std::filesystem::path& path) {
  GzReader in(path);

  Nifti1Header hdr{};
  if (in.read(&hdr, sizeof(hdr)) != sizeof(hdr))
    throw AirwayError(ErrorCode::UnsupportedFormat,
                      "file too short for a NIfTI-1 header");
  if (hdr.sizeof_hdr != 348 || std::strncmp(hdr.magic, "n+1", 3) != 0)
    throw AirwayError(ErrorCode::UnsupportedFormat,
                      "NIfTI-1 magic not recognized (little-endian 'n+1' "
                      "single-file expected)");

  if (hdr.dim[0] < 3 || hdr.dim[1] <= 0 || hdr.dim[2] <= 0 || hdr.dim[3] <= 0)
    throw AirwayError(ErrorCode::CorruptHeader, "non-positive image dims");
  for (int i = 4; i <= hdr.dim[0] && i < 8; ++i)
    if (hdr.dim[i] > 1)
      throw AirwayError(ErrorCode::UnsupportedDatatype,
                        "multi-volume NIfTI not supported");

  std::size_t voxel_bytes = 0;
  switch (hdr.datatype) {
    case kDtUint8: voxel_bytes = 1; break;
    case kDtInt16: voxel_bytes = 2; break;
    case kDtFloat32: voxel_bytes = 4; break;
    default:
      throw AirwayError(ErrorCode::UnsupportedDatatype,
                        "NIfTI datatype " + std::to_string(hdr.datatype) +
                            " not in {uint8, int16, float32}");
  }

  const Dims dims{hdr.dim[3], hdr.dim[2], hdr.dim[1]};
  Spacing spacing{hdr.pixdim[3], hdr.pixdim[2], hdr.pixdim[1]};
  if (spacing.dz <= 0.0) spacing.dz = 1.0;
  if (spacing.dy <= 0.0) spacing.dy = 1.0;
  if (spacing.dx <= 0.0) spacing.dx = 1.0;

  const std::size_t offset =
      hdr.vox_offset >= 348.0f ? static_cast<std::size_t>(hdr.vox_offset) : 352;
  if (offset > sizeof(hdr)) in.skip(offset - sizeof(hdr));

  const std::size_t count = static_cast<std::size_t>(dims.count());
  std::vector<char> raw(count * voxel_bytes);
  if (in.read(raw.data(), raw.size()) != raw.size())
    throw AirwayError(ErrorCode::CorruptHeader,
                      "data shorter than header promises");

  std::vector<float> values(count);
  switch (hdr.datatype) {
    case kDtUint8: {
      const auto* src = reinterpret_cast<const std::uint8_t*>(raw.data());
      for (std::size_t i = 0; i < count; ++i)
        values[i] = static_cast<float>(src[i]);
      break;
    }
    case kDtInt16: {
      const auto* src = reinterpret_cast<const std::int16_t*>(raw.data());
      for (std::size_t i = 0; i < count; ++i)
        values[i] = static_cast<float>(src[i]);
      break;
    }
    case kDtFloat32: {
      std::memcpy(values.data(), raw.data(), raw.size());
      break;
    }
  }

  if (hdr.scl_slope != 0.0f && !(hdr.scl_slope == 1.0f && hdr.scl_inter == 0.0f)) {
    for (float& v : values) v = v * hdr.scl_slope + hdr.scl_inter;
  }

  GridKind kind = GridKind::Intensity;
  {
    char name[17] = {};
    std::memcpy(name, hdr.intent_name, 16);
    const std::string intent(name);
    if (intent == "Binary") kind = GridKind::Binary;
    else if (intent == "Probability") kind = GridKind::Probability;
  }

  VoxelGrid grid(dims, spacing, kind, std::move(values));
  grid.validate();
  return grid;
}

void save_nifti(const VoxelGrid& grid, const std::filesystem::path& path,
                bool compress) {
  Nifti1Header hdr{};
  hdr.sizeof_hdr = 348;
  hdr.regular = 'r';
  hdr.dim[0] = 3;
  hdr.dim[1] = static_cast<std::int16_t>(grid.dims().w);
  hdr.dim[2] = static_cast<std::int16_t>(grid.dims().h);
  hdr.dim[3] = static_cast<std::int16_t>(grid.dims().d);
  for (int i = 4; i < 8; ++i) hdr.dim[i] = 1;
  hdr.pixdim[0] = 1.0f;
  hdr.pixdim[1] = static_cast<float>(grid.spacing().dx);
  hdr.pixdim[2] = static_cast<float>(grid.spacing().dy);
  hdr.pixdim[3] = static_cast<float>(grid.spacing().dz);
  hdr.vox_offset = 352.0f;
  hdr.scl_slope = 1.0f;
  hdr.scl_inter = 0.0f;
  hdr.xyzt_units = 2;  // millimetres
  std::strncpy(hdr.descrip, "airwaytopo", sizeof(hdr.descrip) - 1);
  std::strncpy(hdr.intent_name, grid_kind_name(grid.kind()),
               sizeof(hdr.intent_name) - 1);
  std::memcpy(hdr.magic, "n+1\0", 4);

  // Binary grids are stored as uint8 so the round trip is bit exact by
  // construction; everything else keeps the internal float32 representation.
  std::vector<char> payload;
  if (grid.kind() == GridKind::Binary) {
    hdr.datatype = kDtUint8;
    hdr.bitpix = 8;
    payload.resize(grid.values().size());
    for (std::size_t i = 0; i < payload.size(); ++i)
      payload[i] = grid.values()[i] > 0.5f ? 1 : 0;
  } else {
    hdr.datatype = kDtFloat32;
    hdr.bitpix = 32;
    payload.resize(grid.values().size() * sizeof(float));
    std::memcpy(payload.data(), grid.values().data(), payload.size());
  }

  const char pad[4] = {};
  if (compress) {
    gzFile out = gzopen(path.string().c_str(), "wb");
    if (!out)
      throw AirwayError(ErrorCode::IoFailure,
                        "cannot write '" + path.string() + "'");
    bool ok = gzwrite(out, &hdr, sizeof(hdr)) == sizeof(hdr) &&
              gzwrite(out, pad, 4) == 4 &&
              gzwrite(out, payload.data(),
                      static_cast<unsigned>(payload.size())) ==
                  static_cast<int>(payload.size());
    ok = gzclose(out) == Z_OK && ok;
    if (!ok)
      throw AirwayError(ErrorCode::IoFailure,
                        "short write to '" + path.string() + "'");
  } else {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(&hdr), sizeof(hdr));
    out.write(pad, 4);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out)
      throw AirwayError(ErrorCode::IoFailure,
                        "short write to '" + path.string() + "'");
  }
}

std::pair<std::filesystem::path, std::filesystem::path> sidecar_pair(
    const std::filesystem::path& path) {
  std::filesystem::path json = path;
  std::filesystem::path bin = path;
  if (path.extension() == ".json") bin.replace_extension(".bin");
  else json.replace_extension(".json");
  return {json, bin};
}

VoxelGrid load_raw_sidecar(const std::filesystem::path& path) {
  const auto [json_path, bin_path] = sidecar_pair(path);

  std::ifstream meta(json_path);
  if (!meta)
    throw AirwayError(ErrorCode::IoFailure,
                      "cannot open sidecar '" + json_path.string() + "'");
  nlohmann::json j;
  try {
    meta >> j;
  } catch (const nlohmann::json::exception& e) {
    throw AirwayError(ErrorCode::CorruptHeader,
                      std::string("sidecar JSON: ") + e.what());
  }
  if (!j.contains("dims") || !j.contains("spacing"))
    throw AirwayError(ErrorCode::CorruptHeader,
                      "sidecar missing dims/spacing");
  if (j.value("dtype", "f32") != "f32")
    throw AirwayError(ErrorCode::UnsupportedDatatype,
                      "sidecar dtype must be f32");

  const auto dims_j = j.at("dims");
  const auto sp_j = j.at("spacing");
  if (dims_j.size() != 3 || sp_j.size() != 3)
    throw AirwayError(ErrorCode::CorruptHeader, "dims/spacing must be triples");
  const Dims dims{dims_j[0].get<std::int64_t>(), dims_j[1].get<std::int64_t>(),
                  dims_j[2].get<std::int64_t>()};
  const Spacing spacing{sp_j[0].get<double>(), sp_j[1].get<double>(),
                        sp_j[2].get<double>()};
  if (dims.d <= 0 || dims.h <= 0 || dims.w <= 0)
    throw AirwayError(ErrorCode::CorruptHeader, "non-positive dims in sidecar");
  const GridKind kind = grid_kind_from_name(j.value("kind", "Intensity"));

  std::ifstream data(bin_path, std::ios::binary);
  if (!data)
    throw AirwayError(ErrorCode::IoFailure,
                      "cannot open data '" + bin_path.string() + "'");
  std::vector<float> values(static_cast<std::size_t>(dims.count()));
  data.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (static_cast<std::size_t>(data.gcount()) != values.size() * sizeof(float))
    throw AirwayError(ErrorCode::CorruptHeader,
                      "data shorter than sidecar promises");

  VoxelGrid grid(dims, spacing, kind, std::move(values));
  grid.validate();
  return grid;
}

void save_raw_sidecar(const VoxelGrid& grid,
                      const std::filesystem::path& path) {
  const auto [json_path, bin_path] = sidecar_pair(path);

  nlohmann::json j;
  j["dims"] = {grid.dims().d, grid.dims().h, grid.dims().w};
  j["spacing"] = {grid.spacing().dz, grid.spacing().dy, grid.spacing().dx};
  j["kind"] = grid_kind_name(grid.kind());
  j["dtype"] = "f32";

  std::ofstream meta(json_path, std::ios::trunc);
  meta << j.dump(2) << "\n";
  if (!meta)
    throw AirwayError(ErrorCode::IoFailure,
                      "cannot write '" + json_path.string() + "'");

  std::ofstream data(bin_path, std::ios::binary | std::ios::trunc);
  data.write(reinterpret_cast<const char*>(grid.values().data()),
             static_cast<std::streamsize>(grid.values().size() *
                                          sizeof(float)));
  if (!data)
    throw AirwayError(ErrorCode::IoFailure,
                      "cannot write '" + bin_path.string() + "'");
}

}  // namespace

VoxelGrid load_volume(const std::filesystem::path& path) {
  const std::string name = path.filename().string();
  if (ends_with(name, ".json") || ends_with(name, ".bin"))
    return load_raw_sidecar(path);
  if (!std::filesystem::exists(path))
    throw AirwayError(ErrorCode::IoFailure,
                      "no such file '" + path.string() + "'");
  return load_nifti(path);
}

void save_volume(const VoxelGrid& grid, const std::filesystem::path& path) {
  grid.validate();
  const std::string name = path.filename().string();
  if (ends_with(name, ".nii.gz")) save_nifti(grid, path, true);
  else if (ends_with(name, ".nii")) save_nifti(grid, path, false);
  else if (ends_with(name, ".json") || ends_with(name, ".bin"))
    save_raw_sidecar(grid, path);
  else
    throw AirwayError(ErrorCode::UnsupportedFormat,
                      "unknown volume extension on '" + name + "'");
}

}  // namespace airway
