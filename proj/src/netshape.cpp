#include "airwaytopo/netshape.hpp"

#include <numeric>

#include "airwaytopo/errors.hpp"
#include "json.hpp"

namespace airway {

namespace {

constexpr int kEncoderBlocks = 3;
constexpr int kDecoderBlocks = 2;

struct Resolved {
  std::vector<int> die_out;   // 7 entries: encoder 0..3, decoder 4..6
  std::vector<int> residual;  // 4 entries, one per encoder level
};

int sum_channels(const std::vector<int>& blocks) {
  return std::accumulate(blocks.begin(), blocks.end(), 0);
}

void require_blocks(const std::vector<std::vector<int>>& dies,
                    std::size_t count, int blocks_each, const char* side) {
  if (dies.size() != count)
    throw AirwayError(ErrorCode::BadConfig,
                      std::string(side) + " must have " +
                          std::to_string(count) + " DIEs");
  for (const auto& die : dies) {
    if (die.size() != static_cast<std::size_t>(blocks_each))
      throw AirwayError(ErrorCode::BadConfig,
                        std::string(side) + " DIEs must have " +
                            std::to_string(blocks_each) +
                            " ConvBlocks each");
    for (int c : die)
      if (c <= 0)
        throw AirwayError(ErrorCode::BadConfig,
                          "ConvBlock channels must be positive");
  }
}

Resolved resolve(const NetConfig& cfg) {
  if (cfg.input_size <= 0 || cfg.input_channels <= 0 ||
      cfg.supervision_channels <= 0 || cfg.out_channels <= 0)
    throw AirwayError(ErrorCode::BadConfig,
                      "sizes and channel counts must be positive");
  require_blocks(cfg.encoder_dies, 4, kEncoderBlocks, "encoder");
  require_blocks(cfg.decoder_dies, 3, kDecoderBlocks, "decoder");

  const std::size_t n_dies = cfg.encoder_dies.size() + cfg.decoder_dies.size();
  Resolved r;
  if (cfg.die_out_channels.empty()) {
    for (const auto& die : cfg.encoder_dies) r.die_out.push_back(die.back());
    for (const auto& die : cfg.decoder_dies) r.die_out.push_back(die.back());
  } else if (cfg.die_out_channels.size() == n_dies) {
    r.die_out = cfg.die_out_channels;
  } else {
    throw AirwayError(ErrorCode::BadConfig,
                      "die_out_channels needs one entry per DIE (" +
                          std::to_string(n_dies) + ")");
  }

  if (cfg.residual_channels.empty()) {
    r.residual.assign(r.die_out.begin(),
                      r.die_out.begin() + cfg.encoder_dies.size());
  } else if (cfg.residual_channels.size() == cfg.encoder_dies.size()) {
    r.residual = cfg.residual_channels;
  } else {
    throw AirwayError(ErrorCode::BadConfig,
                      "residual_channels needs one entry per encoder level");
  }

  for (int c : r.die_out)
    if (c <= 0)
      throw AirwayError(ErrorCode::BadConfig,
                        "die_out_channels must be positive");
  for (int c : r.residual)
    if (c <= 0)
      throw AirwayError(ErrorCode::BadConfig,
                        "residual_channels must be positive");

  const int halvings = static_cast<int>(cfg.encoder_dies.size()) - 1;
  if (cfg.input_size % (1 << halvings) != 0)
    throw AirwayError(ErrorCode::IndivisibleInput,
                      "input size must be divisible by " +
                          std::to_string(1 << halvings));

  // The residual addition at each encoder level combines the 1x1x1-convolved
  // pooled input with the DIE output; both operands share the level's
  // spatial extent by construction, so only the channels can disagree.
  for (std::size_t i = 0; i < r.residual.size(); ++i) {
    if (r.residual[i] != r.die_out[i])
      throw AirwayError(
          ErrorCode::ShapeMismatch,
          "residual addition operands differ at encoder level " +
              std::to_string(i + 1) + ": " + std::to_string(r.residual[i]) +
              " vs " + std::to_string(r.die_out[i]) + " channels");
  }
  return r;
}

Dims cube(int edge) { return Dims{edge, edge, edge}; }

}  // namespace

std::vector<LayerShape> infer_shapes(const NetConfig& cfg) {
  const Resolved r = resolve(cfg);
  std::vector<LayerShape> shapes;
  shapes.push_back({"input", cube(cfg.input_size), cfg.input_channels});

  const std::size_t depth = cfg.encoder_dies.size();
  for (std::size_t i = 0; i < depth; ++i) {
    const int edge = cfg.input_size >> i;
    shapes.push_back({"encoder_die_" + std::to_string(i + 1) + "_concat",
                      cube(edge), sum_channels(cfg.encoder_dies[i])});
    shapes.push_back(
        {"encoder_" + std::to_string(i + 1), cube(edge), r.die_out[i]});
  }
  for (std::size_t j = 0; j < cfg.decoder_dies.size(); ++j) {
    // Each decoder DIE runs after one doubling; the chain ends back at the
    // input resolution.
    const int edge = cfg.input_size >> (depth - 2 - j);
    shapes.push_back({"decoder_die_" + std::to_string(j + 1) + "_concat",
                      cube(edge), sum_channels(cfg.decoder_dies[j])});
    shapes.push_back({"decoder_" + std::to_string(j + 1), cube(edge),
                      r.die_out[depth + j]});
  }
  shapes.push_back({"output", cube(cfg.input_size), cfg.out_channels});
  return shapes;
}

std::int64_t conv3_params(std::int64_t c_in, std::int64_t c_out) {
  return 27 * c_in * c_out + c_out;
}

std::int64_t conv1_params(std::int64_t c_in, std::int64_t c_out) {
  return c_in * c_out + c_out;
}

std::int64_t conv_block_params(std::int64_t c_in, std::int64_t c_out) {
  // Conv3 + bias, instance-norm affine pair, sigmoid gate (a 1x1x1 conv of
  // the block's own width).
  return conv3_params(c_in, c_out) + 2 * c_out + conv1_params(c_out, c_out);
}

std::int64_t param_count(const NetConfig& cfg) {
  const Resolved r = resolve(cfg);
  const std::size_t depth = cfg.encoder_dies.size();
  std::int64_t total = 0;

  auto count_die = [&](const std::vector<int>& blocks, int c_in,
                       int die_out) {
    for (int c_out : blocks) {
      total += conv_block_params(c_in, c_out);
      total += conv1_params(c_out, cfg.supervision_channels);
      c_in = c_out;
    }
    total += conv1_params(sum_channels(blocks), die_out);
  };

  for (std::size_t i = 0; i < depth; ++i) {
    const int c_in = i == 0 ? cfg.input_channels : r.die_out[i - 1];
    count_die(cfg.encoder_dies[i], c_in, r.die_out[i]);
    total += conv1_params(cfg.input_channels, r.residual[i]);
  }
  for (std::size_t j = 0; j < cfg.decoder_dies.size(); ++j) {
    // Upsampled deeper feature concatenated with the same-resolution
    // encoder skip.
    const int prev = j == 0 ? r.die_out[depth - 1] : r.die_out[depth + j - 1];
    const int skip = r.die_out[depth - 2 - j];
    count_die(cfg.decoder_dies[j], prev + skip, r.die_out[depth + j]);
  }
  total += conv1_params(r.die_out.back(), cfg.out_channels);
  return total;
}

NetConfig net_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw AirwayError(ErrorCode::BadConfig,
                      std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object())
    throw AirwayError(ErrorCode::BadConfig, "config must be a JSON object");

  NetConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "input_size")
        cfg.input_size = value.get<int>();
      else if (key == "input_channels")
        cfg.input_channels = value.get<int>();
      else if (key == "encoder_dies")
        cfg.encoder_dies = value.get<std::vector<std::vector<int>>>();
      else if (key == "decoder_dies")
        cfg.decoder_dies = value.get<std::vector<std::vector<int>>>();
      else if (key == "die_out_channels")
        cfg.die_out_channels = value.get<std::vector<int>>();
      else if (key == "residual_channels")
        cfg.residual_channels = value.get<std::vector<int>>();
      else if (key == "supervision_channels")
        cfg.supervision_channels = value.get<int>();
      else if (key == "out_channels")
        cfg.out_channels = value.get<int>();
      else
        throw AirwayError(ErrorCode::BadConfig,
                          "unknown config key: " + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw AirwayError(ErrorCode::BadConfig,
                      std::string("bad config value: ") + e.what());
  }
  return cfg;
}

std::string net_report_to_json(const std::vector<LayerShape>& shapes,
                               std::int64_t params) {
  nlohmann::json j;
  j["shapes"] = nlohmann::json::array();
  for (const LayerShape& s : shapes) {
    j["shapes"].push_back({{"stage", s.stage},
                           {"spatial", {s.spatial.d, s.spatial.h, s.spatial.w}},
                           {"channels", s.channels}});
  }
  j["param_count"] = params;
  return j.dump(2);
}

}  // namespace airway
