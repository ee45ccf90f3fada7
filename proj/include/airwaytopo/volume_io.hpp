#pragma once

#include <filesystem>

#include "airwaytopo/voxel_grid.hpp"

namespace airway {

// Two on-disk formats:
//   - NIfTI-1 single file (.nii / .nii.gz), little-endian, datatypes
//     uint8 / int16 / float32. vox_offset is honored and scl_slope/scl_inter
//     applied when nonzero. Spacing comes from pixdim[1..3]; qform/sform are
//     otherwise ignored. The grid kind is stored in intent_name on save and
//     recovered on load (Intensity when absent).
//   - Raw float32 (.bin) + JSON sidecar (.json):
//     {"dims":[d,h,w],"spacing":[dz,dy,dx],"kind":"...","dtype":"f32"}.
//     Passing either file of the pair works.
VoxelGrid load_volume(const std::filesystem::path& path);

void save_volume(const VoxelGrid& grid, const std::filesystem::path& path);

}  // namespace airway
