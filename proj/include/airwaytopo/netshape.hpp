#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "airwaytopo/voxel_grid.hpp"

namespace airway {

// Symbolic description of the scale-enhanced U-shaped network: four encoder
// DIEs of three ConvBlocks each, three decoder DIEs of two blocks, with the
// pyramid-pooled input re-entering every encoder level through a 1x1x1
// residual convolution. Nothing here executes; shapes and parameter counts
// are inferred from the channel arithmetic alone.
struct NetConfig {
  int input_size = 128;  // cube edge of the input patch
  int input_channels = 1;
  // Per-DIE ConvBlock output channels.
  std::vector<std::vector<int>> encoder_dies = {
      {8, 16, 32}, {16, 32, 64}, {32, 64, 128}, {64, 128, 256}};
  std::vector<std::vector<int>> decoder_dies = {{128, 64}, {64, 32}, {32, 16}};
  // Channels after each DIE's fusing 1x1x1 convolution, encoder DIEs first,
  // then decoder DIEs. Empty -> each DIE's last block channel count.
  std::vector<int> die_out_channels;
  // Output channels of the per-level residual convolution on the pooled
  // input. Empty -> the encoder DIE outputs (the residual addition needs
  // them equal; a conflicting explicit choice is rejected).
  std::vector<int> residual_channels;
  // Channels of the per-block group-supervision head (1x1x1 conv feeding a
  // parameter-free upsample to input resolution).
  int supervision_channels = 1;
  int out_channels = 1;  // final 1x1x1 head on the last decoder feature
};

struct LayerShape {
  std::string stage;
  Dims spatial;
  int channels = 0;

  bool operator==(const LayerShape&) const = default;
};

// Walks the network symbolically and returns one row per named tensor:
// "input", per encoder level the DIE concatenation ("encoder_die_N_concat")
// and the level output ("encoder_N"), the decoder counterparts, and
// "output". Verifies that the residual addition operands match at every
// encoder level (ShapeMismatch otherwise) and that the input survives the
// halving chain (IndivisibleInput otherwise).
std::vector<LayerShape> infer_shapes(const NetConfig& cfg);

// Weight accounting for the individual layer kinds. Conv biases and the
// instance-norm affine pair are included; upsampling carries no weights.
std::int64_t conv3_params(std::int64_t c_in, std::int64_t c_out);
std::int64_t conv1_params(std::int64_t c_in, std::int64_t c_out);
// One ConvBlock: 3x3x3 conv + instance norm + the sigmoid-gated 1x1x1
// recalibration conv.
std::int64_t conv_block_params(std::int64_t c_in, std::int64_t c_out);

// Total learnable parameters of the configured network: all ConvBlocks,
// per-DIE fusion convs, per-level residual convs, per-block supervision
// heads, and the final output head.
std::int64_t param_count(const NetConfig& cfg);

// Strict JSON <-> config plumbing for the CLI: unknown keys are rejected,
// absent keys keep their defaults.
NetConfig net_config_from_json(const std::string& text);
std::string net_report_to_json(const std::vector<LayerShape>& shapes,
                               std::int64_t params);

}  // namespace airway
