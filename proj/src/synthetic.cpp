#include "seedloop/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace seedloop::synthetic {

namespace {

std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

} // namespace

Image render_seed(ClassIndex cls, const SeedImageConfig& config, Rng& rng) {
  const int n = config.size;
  const double scale = n / 32.0;
  const double cx = n / 2.0 + uniform(rng, -2, 2) * scale, cy = n / 2.0 + uniform(rng, -2, 2) * scale;
  const double a = uniform(rng, 10, 13) * scale, b = uniform(rng, 6.5, 8.5) * scale;
  const double theta = uniform(rng, 0, std::numbers::pi);
  const double ct = std::cos(theta), st = std::sin(theta);
  const std::array<double, 3> base{uniform(rng, 210, 240), uniform(rng, 165, 205), uniform(rng, 45, 95)};
  const double severity = uniform(rng, config.severity_min, config.severity_max);

  // class-specific geometry
  const double cut_sign = uniform(rng, 0, 1) < 0.5 ? -1.0 : 1.0;
  const double cut = a * (1.0 - 0.6 * severity);
  const double patch_x = uniform(rng, -0.4, 0.4) * a, patch_y = uniform(rng, -0.4, 0.4) * b;
  const double patch_r = (3.0 + 4.0 * severity) * scale;
  const double crack_angle = uniform(rng, 0, std::numbers::pi);
  const double crack_nx = -std::sin(crack_angle), crack_ny = std::cos(crack_angle);
  const double crack_off = uniform(rng, -0.3, 0.3) * b;
  const double crack_w = (0.6 + 0.5 * severity) * scale;

  std::normal_distribution<double> noise(0.0, config.noise_sigma);
  Image im(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double lx = ct * dx + st * dy, ly = -st * dx + ct * dy;
      const double rr = (lx * lx) / (a * a) + (ly * ly) / (b * b);
      std::array<double, 3> col{250, 250, 250};
      bool inside = rr <= 1.0;
      if (inside && cls == corn::broken && cut_sign * lx > cut) inside = false;
      if (inside) {
        const double shade = 1.0 - 0.18 * rr;
        for (int c = 0; c < 3; ++c) col[static_cast<std::size_t>(c)] = base[static_cast<std::size_t>(c)] * shade;
        if (cls == corn::broken && cut_sign * lx > cut - 2.0 * scale) {
          const std::array<double, 3> pale{248, 238, 205};
          for (int c = 0; c < 3; ++c) col[c] = 0.25 * col[c] + 0.75 * pale[c];
        } else if (cls == corn::discolored) {
          const double pd = std::hypot(lx - patch_x, ly - patch_y);
          if (pd < patch_r) {
            const double w = 0.8 * severity * (1.0 - 0.5 * pd / patch_r);
            const std::array<double, 3> brown{110, 62, 34};
            for (int c = 0; c < 3; ++c) col[c] = (1 - w) * col[c] + w * brown[c];
          }
        } else if (cls == corn::silkcut) {
          const double d = std::abs(lx * crack_nx + ly * crack_ny - crack_off);
          if (d < crack_w) {
            const double w = 0.7 * std::max(0.4, severity);
            const std::array<double, 3> dark{70, 45, 25};
            for (int c = 0; c < 3; ++c) col[c] = (1 - w) * col[c] + w * dark[c];
          }
        }
      }
      for (int c = 0; c < 3; ++c) im.at(x, y, c) = clamp_byte(col[static_cast<std::size_t>(c)] + noise(rng));
    }
  return im;
}

Dataset make_seed_dataset(std::span<const int> per_class, std::uint64_t seed, const std::string& prefix,
                          const SeedImageConfig& config) {
  const LabelSet labels = LabelSet::corn();
  std::vector<ImageRecord> records;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(c)}));
    for (int i = 0; i < per_class[c]; ++i) {
      ImageRecord r;
      char buf[16];
      std::snprintf(buf, sizeof buf, "%05d", i);
      r.id = prefix + "-" + labels.name(static_cast<ClassIndex>(c)) + "-" + buf;
      r.label = static_cast<ClassIndex>(c);
      r.pixels = std::make_shared<const Image>(render_seed(static_cast<ClassIndex>(c), config, rng));
      records.push_back(std::move(r));
    }
  }
  return Dataset(prefix, labels, std::move(records));
}

Image render_solid(ClassIndex cls, int size, Rng& rng) {
  static constexpr std::array<std::array<double, 3>, 4> palette{
      {{200, 40, 40}, {40, 200, 40}, {40, 40, 200}, {200, 200, 40}}};
  const auto& base = palette[static_cast<std::size_t>(cls) % palette.size()];
  std::array<double, 3> col{};
  for (int c = 0; c < 3; ++c) col[c] = base[c] + uniform(rng, -15, 15);
  std::normal_distribution<double> noise(0.0, 4.0);
  Image im(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) im.at(x, y, c) = clamp_byte(col[static_cast<std::size_t>(c)] + noise(rng));
  return im;
}

Dataset make_solid_dataset(std::span<const int> per_class, int size, std::uint64_t seed, const std::string& prefix) {
  const LabelSet labels = LabelSet::corn();
  std::vector<ImageRecord> records;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(c), 0x736f6cULL}));
    for (int i = 0; i < per_class[c]; ++i) {
      ImageRecord r;
      char buf[16];
      std::snprintf(buf, sizeof buf, "%05d", i);
      r.id = prefix + "-" + labels.name(static_cast<ClassIndex>(c)) + "-" + buf;
      r.label = static_cast<ClassIndex>(c);
      r.pixels = std::make_shared<const Image>(render_solid(static_cast<ClassIndex>(c), size, rng));
      records.push_back(std::move(r));
    }
  }
  return Dataset(prefix, labels, std::move(records));
}

Image render_tray(int width, int height, std::span<const TraySeed> seeds) {
  Image im(width, height, 255);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (const auto& s : seeds) {
        const double dx = (x - s.cx) / s.rx, dy = (y - s.cy) / s.ry;
        if (dx * dx + dy * dy <= 1.0) {
          im.at(x, y, 0) = 150;
          im.at(x, y, 1) = 110;
          im.at(x, y, 2) = 40;
        }
      }
  return im;
}

Dataset write_images(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<ImageRecord> out;
  out.reserve(dataset.size());
  for (const auto& r : dataset) {
    ImageRecord copy = r;
    if (copy.path.empty()) {
      if (!r.pixels) throw DatasetError("record '" + r.id + "' has no pixels to write");
      copy.path = r.id + ".png";
      write_png(*r.pixels, dir / copy.path);
    } else if (std::filesystem::path(copy.path).is_relative() && !dataset.root().empty()) {
      copy.path = std::filesystem::absolute(dataset.root() / copy.path).string();
    }
    out.push_back(std::move(copy));
  }
  return Dataset(dataset.name(), dataset.labels(), std::move(out), dir);
}

} // namespace seedloop::synthetic
