#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hgan/dataio.hpp"
#include "hgan/nn_layers.hpp"
#include "hgan/serialize.hpp"

namespace hgan {

// ---------------------------------------------------------------------------
// Frozen feature backbone: VGG-16 conv stages 1-4 (2+2+3+3 convs), taps at the
// end of each stage before pooling. Channels b, 2b, 4b, 8b.
// ---------------------------------------------------------------------------

struct PerceptualFeatures {
  std::vector<Tensor> maps;  // exactly 4, strictly decreasing resolution
};

struct FeatureBackbone {
  int64_t base_channels = 64;
  std::vector<std::vector<Conv2dLayer>> stages;  // 4 stages
  std::string id;

  std::vector<int64_t> tap_channels() const {
    return {base_channels, 2 * base_channels, 4 * base_channels, 8 * base_channels};
  }

  ParamMap params() {
    ParamMap out;
    for (size_t s = 0; s < stages.size(); ++s)
      for (size_t i = 0; i < stages[s].size(); ++i)
        stages[s][i].collect("stage" + std::to_string(s) + ".conv" + std::to_string(i), out);
    return out;
  }
};

namespace detail {

inline std::string weights_fingerprint(ParamMap params) {
  // FNV-1a over the raw parameter bytes; names the weights, not the file.
  uint64_t h = 1469598103934665603ULL;
  for (auto& p : params)
    for (double d : p.tensor.data()) {
      uint64_t bits;
      std::memcpy(&bits, &d, sizeof bits);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xff;
        h *= 1099511628211ULL;
      }
    }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

inline FeatureBackbone backbone_arch(int64_t base_channels, Rng& rng) {
  require(base_channels >= 4, Err::InvalidConfig, "backbone base_channels must be >= 4");
  FeatureBackbone bb;
  bb.base_channels = base_channels;
  const int64_t b = base_channels;
  const std::vector<std::vector<int64_t>> widths = {{b, b}, {2 * b, 2 * b}, {4 * b, 4 * b, 4 * b},
                                                    {8 * b, 8 * b, 8 * b}};
  int64_t in_ch = 3;
  for (const auto& stage_widths : widths) {
    std::vector<Conv2dLayer> stage;
    for (int64_t w : stage_widths) {
      stage.push_back(Conv2dLayer::make(in_ch, w, 3, 1, 1, rng));
      in_ch = w;
    }
    bb.stages.push_back(std::move(stage));
  }
  return bb;
}

inline void freeze_backbone(FeatureBackbone& bb) {
  auto params = bb.params();
  set_params_trainable(params, false);
}

constexpr const char* kBackboneMagic = "HGANVGG1";

}  // namespace detail

// Seeded random frozen stand-in with the same shape as the pretrained recipe.
inline FeatureBackbone build_backbone(uint64_t seed, int64_t base_channels = 64) {
  Rng rng(seed);
  FeatureBackbone bb = detail::backbone_arch(base_channels, rng);
  bb.id = "vgg16-" + detail::weights_fingerprint(bb.params());
  detail::freeze_backbone(bb);
  return bb;
}

inline void save_backbone(FeatureBackbone& bb, const std::filesystem::path& path) {
  BinaryWriter w(path);
  w.str(detail::kBackboneMagic);
  w.u32(1);
  w.i64(bb.base_channels);
  auto params = bb.params();
  w.u64(params.size());
  for (auto& p : params) {
    w.str(p.name);
    w.tensor(p.tensor);
  }
  w.close();
}

// Loads a 16-layer-recipe convolutional backbone weight file.
inline FeatureBackbone build_backbone(const std::filesystem::path& weights_file) {
  try {
    BinaryReader r(weights_file);
    require(r.str() == detail::kBackboneMagic, Err::WeightLoadError,
            "not a backbone weight file: " + weights_file.string());
    require(r.u32() == 1, Err::WeightLoadError, "unsupported backbone file version");
    const int64_t base = r.i64();
    Rng rng(0);
    FeatureBackbone bb = detail::backbone_arch(base, rng);
    auto params = bb.params();
    require(r.u64() == params.size(), Err::WeightLoadError, "backbone parameter count mismatch");
    for (auto& p : params) {
      require(r.str() == p.name, Err::WeightLoadError, "backbone parameter name mismatch");
      r.tensor_into(p.tensor, Err::WeightLoadError);
    }
    bb.id = "vgg16-" + detail::weights_fingerprint(bb.params());
    detail::freeze_backbone(bb);
    return bb;
  } catch (const Error& e) {
    if (e.code() == Err::DecodeError) fail(Err::WeightLoadError, e.what());
    throw;
  }
}

// Four activations at full, 1/2, 1/4 and 1/8 resolution. The backbone is
// frozen: gradient flows through but never into its parameters.
inline PerceptualFeatures extract_features(const FeatureBackbone& bb, const Tensor& images) {
  require(images.ndim() == 4 && images.dim(1) == 3, Err::ShapeError, "expected (N,3,H,W)");
  require(images.dim(2) % 16 == 0 && images.dim(3) % 16 == 0, Err::ShapeError,
          "backbone input dims must divide by 16, got " + shape_str(images.shape()));
  PerceptualFeatures out;
  Tensor x = images;
  for (size_t s = 0; s < bb.stages.size(); ++s) {
    if (s > 0) x = maxpool2d(x, 2);
    for (const auto& conv : bb.stages[s]) x = relu(conv(x));
    out.maps.push_back(x);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Discriminators
// ---------------------------------------------------------------------------

enum class DiscKind { PATCH, PIXEL, PERCEPTUAL };

inline const char* disc_kind_name(DiscKind k) {
  switch (k) {
    case DiscKind::PATCH: return "patch";
    case DiscKind::PIXEL: return "pixel";
    case DiscKind::PERCEPTUAL: return "perceptual";
  }
  return "?";
}

struct DiscriminatorConfig {
  DiscKind kind = DiscKind::PATCH;
  DomainTag domain = DomainTag::REAL;
  // PERCEPTUAL only: score-map resolutions for a reference_size input.
  std::vector<int64_t> output_scales;
  int64_t reference_size = 128;
  int64_t base_channels = 64;  // PATCH/PIXEL first-layer width
};

inline DiscriminatorConfig make_disc_config(DiscKind kind, DomainTag domain) {
  DiscriminatorConfig cfg;
  cfg.kind = kind;
  cfg.domain = domain;
  if (kind == DiscKind::PERCEPTUAL) cfg.output_scales = {16, 8, 4};
  return cfg;
}

namespace detail {
inline int64_t log2_exact(int64_t v) {
  int64_t l = 0;
  while ((int64_t{1} << l) < v) ++l;
  return ((int64_t{1} << l) == v) ? l : -1;
}
}  // namespace detail

inline void validate(const DiscriminatorConfig& cfg) {
  if (cfg.kind != DiscKind::PERCEPTUAL) {
    require(cfg.output_scales.empty(), Err::InvalidConfig,
            "output_scales apply to perceptual discriminators only");
    return;
  }
  require(!cfg.output_scales.empty(), Err::InvalidConfig, "perceptual needs output scales");
  for (size_t i = 0; i < cfg.output_scales.size(); ++i) {
    const int64_t s = cfg.output_scales[i];
    require(s > 0, Err::InvalidConfig, "output scales must be positive");
    if (i > 0)
      require(s < cfg.output_scales[i - 1], Err::InvalidConfig,
              "output scales must be strictly decreasing");
    const int64_t factor = cfg.reference_size / s;
    require(factor * s == cfg.reference_size && detail::log2_exact(factor) >= 1,
            Err::InvalidConfig,
            "scale " + std::to_string(s) + " must divide reference size " +
                std::to_string(cfg.reference_size) + " by a power of two");
  }
}

struct ScoreMaps {
  std::vector<Tensor> maps;  // each (N,1,h,w)

  size_t size() const { return maps.size(); }
};

struct Discriminator {
  DiscriminatorConfig config;

  // PATCH: four stride-2 convs (b,2b,4b,8b), instance norm except the first.
  std::vector<Conv2dLayer> patch_convs;
  std::vector<InstanceNormLayer> patch_norms;
  Conv2dLayer patch_head;

  // PIXEL: two 1x1 convs then a 1x1 head.
  Conv2dLayer pixel_conv1, pixel_conv2;
  InstanceNormLayer pixel_norm;
  Conv2dLayer pixel_head;

  // PERCEPTUAL: stride-2 conv blocks chained from the first backbone tap,
  // stacked with deeper taps, with a 1x1 score head per requested scale.
  std::vector<Conv2dLayer> perc_blocks;
  std::vector<Conv2dLayer> perc_heads;
  std::vector<int64_t> perc_head_depth;  // number of downsamples before each head
  std::string backbone_id;

  ParamMap params() {
    ParamMap out;
    const std::string d = std::string("d_") + domain_name(config.domain);
    switch (config.kind) {
      case DiscKind::PATCH:
        for (size_t i = 0; i < patch_convs.size(); ++i)
          patch_convs[i].collect(d + ".conv" + std::to_string(i), out);
        for (size_t i = 0; i < patch_norms.size(); ++i)
          patch_norms[i].collect(d + ".norm" + std::to_string(i), out);
        patch_head.collect(d + ".head", out);
        break;
      case DiscKind::PIXEL:
        pixel_conv1.collect(d + ".conv0", out);
        pixel_conv2.collect(d + ".conv1", out);
        pixel_norm.collect(d + ".norm", out);
        pixel_head.collect(d + ".head", out);
        break;
      case DiscKind::PERCEPTUAL:
        for (size_t i = 0; i < perc_blocks.size(); ++i)
          perc_blocks[i].collect(d + ".block" + std::to_string(i), out);
        for (size_t i = 0; i < perc_heads.size(); ++i)
          perc_heads[i].collect(d + ".head" + std::to_string(i), out);
        break;
    }
    return out;
  }
};

inline Discriminator build_discriminator(const DiscriminatorConfig& cfg, const FeatureBackbone* backbone,
                                         Rng& rng) {
  validate(cfg);
  Discriminator d;
  d.config = cfg;
  const int64_t b = cfg.base_channels;
  switch (cfg.kind) {
    case DiscKind::PATCH: {
      require(backbone == nullptr, Err::InvalidConfig, "patch discriminator takes no backbone");
      int64_t in_ch = 3;
      for (int64_t i = 0; i < 4; ++i) {
        const int64_t out_ch = b << std::min<int64_t>(i, 3);
        d.patch_convs.push_back(Conv2dLayer::make(in_ch, out_ch, 4, 2, 1, rng));
        if (i > 0) d.patch_norms.push_back(InstanceNormLayer::make(out_ch));
        in_ch = out_ch;
      }
      d.patch_head = Conv2dLayer::make(in_ch, 1, 3, 1, 1, rng);
      break;
    }
    case DiscKind::PIXEL: {
      require(backbone == nullptr, Err::InvalidConfig, "pixel discriminator takes no backbone");
      d.pixel_conv1 = Conv2dLayer::make(3, b, 1, 1, 0, rng);
      d.pixel_conv2 = Conv2dLayer::make(b, 2 * b, 1, 1, 0, rng);
      d.pixel_norm = InstanceNormLayer::make(2 * b);
      d.pixel_head = Conv2dLayer::make(2 * b, 1, 1, 1, 0, rng);
      break;
    }
    case DiscKind::PERCEPTUAL: {
      require(backbone != nullptr, Err::InvalidConfig, "perceptual discriminator needs a backbone");
      d.backbone_id = backbone->id;
      const auto taps = backbone->tap_channels();
      int64_t max_depth = 0;
      for (int64_t s : cfg.output_scales)
        max_depth = std::max(max_depth, detail::log2_exact(cfg.reference_size / s));
      // Stream channel width per depth: taps stack until depth 3, then plain chain.
      int64_t in_ch = taps[0];
      for (int64_t t = 1; t <= max_depth; ++t) {
        const int64_t out_ch = t <= 3 ? taps[t] : taps[3];
        d.perc_blocks.push_back(Conv2dLayer::make(in_ch, out_ch, 3, 2, 1, rng));
        in_ch = t <= 3 ? out_ch + taps[t] : out_ch;
      }
      auto stream_channels = [&](int64_t depth) {
        if (depth == 0) return taps[0];
        return depth <= 3 ? 2 * taps[depth] : taps[3];
      };
      for (int64_t s : cfg.output_scales) {
        const int64_t depth = detail::log2_exact(cfg.reference_size / s);
        d.perc_head_depth.push_back(depth);
        d.perc_heads.push_back(Conv2dLayer::make(stream_channels(depth), 1, 1, 1, 0, rng));
      }
      break;
    }
  }
  return d;
}

// Raw (unsquashed) score maps.
inline ScoreMaps discriminate(const Discriminator& d, const Tensor& images,
                              const FeatureBackbone* backbone = nullptr) {
  ScoreMaps out;
  switch (d.config.kind) {
    case DiscKind::PATCH: {
      Tensor x = images;
      for (size_t i = 0; i < d.patch_convs.size(); ++i) {
        x = d.patch_convs[i](x);
        if (i > 0) x = d.patch_norms[i - 1](x);
        x = leaky_relu(x, 0.2);
      }
      out.maps.push_back(d.patch_head(x));
      break;
    }
    case DiscKind::PIXEL: {
      Tensor x = leaky_relu(d.pixel_conv1(images), 0.2);
      x = leaky_relu(d.pixel_norm(d.pixel_conv2(x)), 0.2);
      out.maps.push_back(d.pixel_head(x));
      break;
    }
    case DiscKind::PERCEPTUAL: {
      require(backbone != nullptr, Err::InvalidConfig, "perceptual discriminator needs a backbone");
      require(backbone->id == d.backbone_id, Err::InvalidConfig,
              "perceptual discriminator called with a different backbone than it was built with");
      int64_t max_depth = 0;
      for (int64_t dep : d.perc_head_depth) max_depth = std::max(max_depth, dep);
      require(images.dim(2) % (int64_t{1} << max_depth) == 0 &&
                  images.dim(3) % (int64_t{1} << max_depth) == 0,
              Err::ShapeError, "input dims too small for the configured output scales");
      PerceptualFeatures feats = extract_features(*backbone, images);
      std::vector<Tensor> stream_at(static_cast<size_t>(max_depth) + 1);
      Tensor x = feats.maps[0];
      stream_at[0] = x;
      for (int64_t t = 1; t <= max_depth; ++t) {
        x = leaky_relu(d.perc_blocks[t - 1](x), 0.2);
        if (t <= 3) x = concat({x, feats.maps[t]}, 1);
        stream_at[t] = x;
      }
      for (size_t i = 0; i < d.perc_heads.size(); ++i)
        out.maps.push_back(d.perc_heads[i](stream_at[d.perc_head_depth[i]]));
      break;
    }
  }
  return out;
}

}  // namespace hgan
