#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "gain/error.hpp"
#include "gain/train_eval.hpp"

namespace gain {

namespace {

constexpr std::array<std::array<double, 3>, kSyntheticClasses> kColors{{
    {0.15, 0.15, 0.20},  // background
    {0.85, 0.30, 0.20},  // rectangle
    {0.25, 0.75, 0.30},  // disk
    {0.25, 0.40, 0.90},  // stripe
}};

std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

SegSample render(const DatasetSpec& spec, Rng& rng) {
  const auto h = spec.height, w = spec.width;
  const auto extent = std::min(h, w);
  std::vector<int> region(static_cast<std::size_t>(h * w), 0);
  std::vector<int> region_class{0};

  const auto shapes = uniform_int(rng, spec.min_shapes, spec.max_shapes);
  for (std::int64_t s = 0; s < shapes; ++s) {
    const int cls = 1 + static_cast<int>(rng.below(3));
    const int id = static_cast<int>(region_class.size());
    region_class.push_back(cls);
    auto paint = [&](auto inside) {
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
          if (inside(x + 0.5, y + 0.5)) region[y * w + x] = id;
    };
    if (cls == 1) {
      const auto rw = uniform_int(rng, extent * 7 / 32, extent * 17 / 32);
      const auto rh = uniform_int(rng, extent * 7 / 32, extent * 17 / 32);
      const auto x0 = uniform_int(rng, 0, w - rw);
      const auto y0 = uniform_int(rng, 0, h - rh);
      paint([&](double x, double y) { return x > x0 && x < x0 + rw && y > y0 && y < y0 + rh; });
    } else if (cls == 2) {
      const double r = static_cast<double>(uniform_int(rng, extent * 7 / 64, extent * 16 / 64));
      const double cx = rng.uniform(r, static_cast<double>(w) - r);
      const double cy = rng.uniform(r, static_cast<double>(h) - r);
      paint([&](double x, double y) { return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r; });
    } else {
      const double angle = static_cast<double>(rng.below(4)) * std::numbers::pi / 4.0;
      const double nx = std::cos(angle), ny = std::sin(angle);
      const double half = static_cast<double>(uniform_int(rng, extent * 6 / 64, extent * 12 / 64)) / 2.0;
      const double cx = rng.uniform(0.25, 0.75) * static_cast<double>(w);
      const double cy = rng.uniform(0.25, 0.75) * static_cast<double>(h);
      paint([&](double x, double y) { return std::abs((x - cx) * nx + (y - cy) * ny) <= half; });
    }
  }

  std::vector<std::array<double, 3>> colors;
  for (int cls : region_class) {
    auto c = kColors[static_cast<std::size_t>(cls)];
    for (auto& v : c) v += rng.uniform(-spec.noise, spec.noise);
    colors.push_back(c);
  }

  SegSample out;
  out.height = h;
  out.width = w;
  out.labels.resize(region.size());
  std::vector<double> img(static_cast<std::size_t>(3 * h * w));
  const double sigma = spec.noise / 2.0;
  for (std::int64_t i = 0; i < h * w; ++i) {
    out.labels[i] = region_class[static_cast<std::size_t>(region[i])];
    for (int c = 0; c < 3; ++c) {
      double v = colors[static_cast<std::size_t>(region[i])][c];
      if (sigma > 0.0) v += sigma * rng.normal();
      img[c * h * w + i] = std::clamp(v, 0.0, 1.0);
    }
  }
  out.image = Tensor::from_data({3, h, w}, std::move(img));
  return out;
}

}  // namespace

void DatasetSpec::validate() const {
  if (num_samples < 0) throw ValidationError("dataset num_samples must be >= 0");
  if (height < 32 || width < 32 || height % 32 != 0 || width % 32 != 0) {
    throw ValidationError("dataset image size must be a positive multiple of 32");
  }
  if (!(noise >= 0.0) || noise > 1.0) throw ValidationError("dataset noise must lie in [0, 1]");
  if (min_shapes < 0 || max_shapes < min_shapes) {
    throw ValidationError("dataset shape count range must satisfy 0 <= min <= max");
  }
}

std::span<const double, 3> class_color(int cls) {
  if (cls < 0 || cls >= kSyntheticClasses) throw ValidationError("class id out of range");
  return kColors[static_cast<std::size_t>(cls)];
}

std::vector<SegSample> generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  Rng root(spec.seed);
  std::vector<SegSample> out;
  out.reserve(static_cast<std::size_t>(spec.num_samples));
  for (int i = 0; i < spec.num_samples; ++i) {
    Rng rng = root.fork(static_cast<std::uint64_t>(i));
    out.push_back(render(spec, rng));
  }
  return out;
}

Batch make_batch(const std::vector<SegSample>& samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ValidationError("empty batch");
  const auto h = samples.at(indices[0]).height, w = samples.at(indices[0]).width;
  const auto n = static_cast<std::int64_t>(indices.size());
  std::vector<double> img;
  img.reserve(static_cast<std::size_t>(n * 3 * h * w));
  Batch b;
  b.labels = {n, h, w, {}};
  for (auto i : indices) {
    const auto& s = samples.at(i);
    if (s.height != h || s.width != w) throw ValidationError("batch samples differ in size");
    img.insert(img.end(), s.image.data().begin(), s.image.data().end());
    b.labels.labels.insert(b.labels.labels.end(), s.labels.begin(), s.labels.end());
  }
  b.images = Tensor::from_data({n, 3, h, w}, std::move(img));
  return b;
}

}  // namespace gain
