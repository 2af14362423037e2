#pragma once

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hgan/errors.hpp"
#include "hgan/image.hpp"
#include "hgan/rng.hpp"

namespace hgan {

enum class DomainTag { SYNTHETIC, REAL };

inline const char* domain_name(DomainTag d) { return d == DomainTag::SYNTHETIC ? "synthetic" : "real"; }

// Binary mask, foreground=1.
struct MaskImage {
  int64_t h = 0, w = 0;
  std::vector<uint8_t> bits;

  MaskImage() = default;
  MaskImage(int64_t h_, int64_t w_, uint8_t fill = 0)
      : h(h_), w(w_), bits(static_cast<size_t>(h_ * w_), fill) {}
  uint8_t& at(int64_t y, int64_t x) { return bits[y * w + x]; }
  uint8_t at(int64_t y, int64_t x) const { return bits[y * w + x]; }
  int64_t area() const {
    int64_t a = 0;
    for (uint8_t b : bits) a += b;
    return a;
  }
  bool operator==(const MaskImage& o) const { return h == o.h && w == o.w && bits == o.bits; }
};

// One normalized image with domain tag and optional mask.
struct ImageSample {
  ImageF pixels;  // 3 x H x W, values in [-1, 1]
  DomainTag domain = DomainTag::SYNTHETIC;
  std::optional<MaskImage> mask;
  std::string source_path;

  int64_t height() const { return pixels.h; }
  int64_t width() const { return pixels.w; }
};

struct IndexEntry {
  std::filesystem::path image;
  std::optional<std::filesystem::path> mask;
};

struct DatasetIndex {
  DomainTag domain = DomainTag::SYNTHETIC;
  std::vector<IndexEntry> entries;

  int64_t count() const { return static_cast<int64_t>(entries.size()); }
};

// Two independent same-sized sample lists; positions imply no pairing.
struct UnpairedBatch {
  std::vector<ImageSample> synthetic;
  std::vector<ImageSample> real;
};

namespace detail {
inline bool has_image_ext(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}
}  // namespace detail

// Expects root/images/ and optionally root/masks/ with matching filenames
// (exact name, or same stem with .png).
inline DatasetIndex scan_domain_dir(const std::filesystem::path& root, DomainTag domain) {
  namespace fs = std::filesystem;
  const fs::path images_dir = root / "images";
  require(fs::is_directory(images_dir), Err::EmptyDataset, "no images directory under " + root.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(images_dir))
    if (e.is_regular_file() && detail::has_image_ext(e.path())) files.push_back(e.path());
  require(!files.empty(), Err::EmptyDataset, "no images in " + images_dir.string());
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

  const fs::path masks_dir = root / "masks";
  DatasetIndex index;
  index.domain = domain;
  for (const auto& f : files) {
    IndexEntry entry{f, std::nullopt};
    if (fs::is_directory(masks_dir)) {
      fs::path exact = masks_dir / f.filename();
      fs::path as_png = masks_dir / (f.stem().string() + ".png");
      if (fs::exists(exact))
        entry.mask = exact;
      else if (fs::exists(as_png))
        entry.mask = as_png;
    }
    index.entries.push_back(std::move(entry));
  }
  return index;
}

// 8-bit values map to u/127.5 - 1; masks binarize at threshold 127 (>127 is foreground).
inline ImageSample load_sample(const IndexEntry& entry, DomainTag domain) {
  ImageSample s;
  s.pixels = to_float(read_image_rgb8(entry.image));
  s.domain = domain;
  s.source_path = entry.image.string();
  require(s.pixels.h >= 4 && s.pixels.w >= 4, Err::ShapeError,
          "image smaller than 4x4: " + entry.image.string());
  if (entry.mask) {
    ImageU8 m = read_image_gray8(*entry.mask);
    require(m.h == s.pixels.h && m.w == s.pixels.w, Err::ShapeMismatch,
            "mask dims differ from image for " + entry.image.string());
    MaskImage mask(m.h, m.w);
    for (size_t i = 0; i < m.data.size(); ++i) mask.bits[i] = m.data[i] > 127 ? 1 : 0;
    s.mask = std::move(mask);
  }
  return s;
}

namespace detail {
inline ImageSample crop_at(const ImageSample& sample, int64_t oy, int64_t ox, int64_t size) {
  ImageSample out;
  out.domain = sample.domain;
  out.source_path = sample.source_path;
  out.pixels = ImageF(sample.pixels.c, size, size);
  for (int64_t ch = 0; ch < sample.pixels.c; ++ch)
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x)
        out.pixels.at(ch, y, x) = sample.pixels.at(ch, oy + y, ox + x);
  if (sample.mask) {
    MaskImage m(size, size);
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x) m.at(y, x) = sample.mask->at(oy + y, ox + x);
    out.mask = std::move(m);
  }
  return out;
}
}  // namespace detail

// Uniform offsets; mask cropped with identical offsets. Row offset drawn first.
inline ImageSample random_crop(const ImageSample& sample, int64_t size, Rng& rng) {
  const int64_t h = sample.height(), w = sample.width();
  require(size >= 1 && size <= h && size <= w, Err::CropTooLarge,
          "crop " + std::to_string(size) + " from " + std::to_string(h) + "x" + std::to_string(w));
  const int64_t oy = rng.uniform_int(h - size + 1);
  const int64_t ox = rng.uniform_int(w - size + 1);
  return detail::crop_at(sample, oy, ox, size);
}

inline ImageSample center_crop(const ImageSample& sample, int64_t size) {
  const int64_t h = sample.height(), w = sample.width();
  require(size >= 1 && size <= h && size <= w, Err::CropTooLarge,
          "crop " + std::to_string(size) + " from " + std::to_string(h) + "x" + std::to_string(w));
  return detail::crop_at(sample, (h - size) / 2, (w - size) / 2, size);
}

// Independent uniform draws from each domain; no positional pairing.
inline UnpairedBatch make_unpaired_batch(const DatasetIndex& syn_index, const DatasetIndex& real_index,
                                         int64_t batch_size, int64_t crop_size, Rng& rng) {
  require(batch_size >= 1, Err::InvalidBatchSize, "batch_size must be >= 1");
  require(syn_index.count() > 0 && real_index.count() > 0, Err::EmptyDataset, "empty index");
  UnpairedBatch batch;
  for (int64_t i = 0; i < batch_size; ++i) {
    const auto& e = syn_index.entries[rng.uniform_int(syn_index.count())];
    batch.synthetic.push_back(random_crop(load_sample(e, syn_index.domain), crop_size, rng));
  }
  for (int64_t i = 0; i < batch_size; ++i) {
    const auto& e = real_index.entries[rng.uniform_int(real_index.count())];
    batch.real.push_back(random_crop(load_sample(e, real_index.domain), crop_size, rng));
  }
  return batch;
}

// out = mask * sample + (1 - mask) * background; background randomly cropped
// to the sample size. The composite carries no mask.
inline ImageSample composite_background(const ImageSample& sample, const ImageSample& background,
                                        Rng& rng) {
  require(sample.mask.has_value(), Err::MaskRequired, "composite_background needs a mask");
  require(background.height() >= sample.height() && background.width() >= sample.width(),
          Err::CropTooLarge, "background smaller than sample");
  ImageSample bg = background;
  bg.mask.reset();
  // Non-square backgrounds: crop rows/cols independently.
  const int64_t oy = rng.uniform_int(background.height() - sample.height() + 1);
  const int64_t ox = rng.uniform_int(background.width() - sample.width() + 1);
  ImageF cropped(3, sample.height(), sample.width());
  for (int64_t ch = 0; ch < 3; ++ch)
    for (int64_t y = 0; y < sample.height(); ++y)
      for (int64_t x = 0; x < sample.width(); ++x)
        cropped.at(ch, y, x) = background.pixels.at(ch, oy + y, ox + x);

  ImageSample out;
  out.domain = sample.domain;
  out.source_path = sample.source_path;
  out.pixels = ImageF(3, sample.height(), sample.width());
  for (int64_t ch = 0; ch < 3; ++ch)
    for (int64_t y = 0; y < sample.height(); ++y)
      for (int64_t x = 0; x < sample.width(); ++x) {
        const double m = sample.mask->at(y, x);
        out.pixels.at(ch, y, x) = m * sample.pixels.at(ch, y, x) + (1.0 - m) * cropped.at(ch, y, x);
      }
  return out;
}

// Permutation stream over [0, n); reshuffles on exhaustion.
class EpochSampler {
 public:
  EpochSampler(int64_t n, Rng rng) : rng_(rng), order_(static_cast<size_t>(n)) {
    require(n > 0, Err::EmptyDataset, "sampler over empty set");
    for (int64_t i = 0; i < n; ++i) order_[i] = i;
    shuffle();
  }

  int64_t next() {
    if (pos_ >= static_cast<int64_t>(order_.size())) {
      shuffle();
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  void shuffle() {
    for (int64_t i = static_cast<int64_t>(order_.size()) - 1; i > 0; --i)
      std::swap(order_[i], order_[rng_.uniform_int(i + 1)]);
  }
  Rng rng_;
  std::vector<int64_t> order_;
  int64_t pos_ = 0;
};

}  // namespace hgan
