#pragma once

#include <string>
#include <vector>

#include "hgan/image.hpp"
#include "hgan/nn_layers.hpp"

namespace hgan {

enum class Direction { SYN_TO_REAL, REAL_TO_SYN };

inline const char* direction_name(Direction d) {
  return d == Direction::SYN_TO_REAL ? "syn_to_real" : "real_to_syn";
}

struct GeneratorConfig {
  int64_t n_residual_blocks = 9;
  int64_t base_channels = 64;
  Direction direction = Direction::SYN_TO_REAL;
};

inline void validate(const GeneratorConfig& cfg) {
  // The published sizes plus small block counts used for verification.
  const bool ok_blocks = cfg.n_residual_blocks == 4 || cfg.n_residual_blocks == 6 ||
                         cfg.n_residual_blocks == 9 ||
                         (cfg.n_residual_blocks >= 1 && cfg.n_residual_blocks <= 3);
  require(ok_blocks, Err::InvalidConfig,
          "n_residual_blocks must be 4, 6 or 9 (or 1-3 for toy models), got " +
              std::to_string(cfg.n_residual_blocks));
  require(cfg.base_channels >= 8, Err::InvalidConfig, "base_channels must be >= 8");
}

struct ResidualBlock {
  Conv2dLayer conv1, conv2;
  InstanceNormLayer norm1, norm2;

  Tensor operator()(const Tensor& x) const {
    Tensor y = relu(norm1(conv1(reflect_pad2d(x, 1))));
    y = norm2(conv2(reflect_pad2d(y, 1)));
    return add(x, y);
  }
  void collect(const std::string& prefix, ParamMap& out) {
    conv1.collect(prefix + ".conv1", out);
    norm1.collect(prefix + ".norm1", out);
    conv2.collect(prefix + ".conv2", out);
    norm2.collect(prefix + ".norm2", out);
  }
};

// c7s1-b, d2b, d4b, n residual blocks, u2b, ub, c7s1-3 with a tanh head.
struct Generator {
  GeneratorConfig config;
  Conv2dLayer head;
  InstanceNormLayer head_norm;
  Conv2dLayer down1, down2;
  InstanceNormLayer down1_norm, down2_norm;
  std::vector<ResidualBlock> blocks;
  ConvT2dLayer up1, up2;
  InstanceNormLayer up1_norm, up2_norm;
  Conv2dLayer out_conv;

  Tensor forward(const Tensor& x) const {
    require(x.ndim() == 4 && x.dim(1) == 3, Err::ShapeError, "generator expects (N,3,H,W)");
    require(x.dim(2) % 4 == 0 && x.dim(3) % 4 == 0, Err::ShapeError,
            "generator input dims must divide by 4, got " + shape_str(x.shape()));
    Tensor y = relu(head_norm(head(reflect_pad2d(x, 3))));
    y = relu(down1_norm(down1(y)));
    y = relu(down2_norm(down2(y)));
    for (const auto& b : blocks) y = b(y);
    y = relu(up1_norm(up1(y)));
    y = relu(up2_norm(up2(y)));
    return tanh_t(out_conv(reflect_pad2d(y, 3)));
  }

  ParamMap params() {
    ParamMap out;
    head.collect("head", out);
    head_norm.collect("head_norm", out);
    down1.collect("down1", out);
    down1_norm.collect("down1_norm", out);
    down2.collect("down2", out);
    down2_norm.collect("down2_norm", out);
    for (size_t i = 0; i < blocks.size(); ++i) blocks[i].collect("block" + std::to_string(i), out);
    up1.collect("up1", out);
    up1_norm.collect("up1_norm", out);
    up2.collect("up2", out);
    up2_norm.collect("up2_norm", out);
    out_conv.collect("out_conv", out);
    return out;
  }
};

inline Generator build_generator(const GeneratorConfig& cfg, Rng& rng) {
  validate(cfg);
  const int64_t b = cfg.base_channels;
  Generator g;
  g.config = cfg;
  g.head = Conv2dLayer::make(3, b, 7, 1, 0, rng);
  g.head_norm = InstanceNormLayer::make(b);
  g.down1 = Conv2dLayer::make(b, 2 * b, 3, 2, 1, rng);
  g.down1_norm = InstanceNormLayer::make(2 * b);
  g.down2 = Conv2dLayer::make(2 * b, 4 * b, 3, 2, 1, rng);
  g.down2_norm = InstanceNormLayer::make(4 * b);
  for (int64_t i = 0; i < cfg.n_residual_blocks; ++i) {
    ResidualBlock blk;
    blk.conv1 = Conv2dLayer::make(4 * b, 4 * b, 3, 1, 0, rng);
    blk.norm1 = InstanceNormLayer::make(4 * b);
    blk.conv2 = Conv2dLayer::make(4 * b, 4 * b, 3, 1, 0, rng);
    blk.norm2 = InstanceNormLayer::make(4 * b);
    g.blocks.push_back(std::move(blk));
  }
  g.up1 = ConvT2dLayer::make(4 * b, 2 * b, 3, rng);
  g.up1_norm = InstanceNormLayer::make(2 * b);
  g.up2 = ConvT2dLayer::make(2 * b, b, 3, rng);
  g.up2_norm = InstanceNormLayer::make(b);
  g.out_conv = Conv2dLayer::make(b, 3, 7, 1, 0, rng);
  return g;
}

// Inference convenience: translates a batch of images without building a graph.
inline std::vector<ImageF> generate(const Generator& g, const std::vector<ImageF>& images) {
  NoGradGuard guard;
  Tensor x = images_to_tensor(images);
  return tensor_to_images(g.forward(x));
}

}  // namespace hgan
