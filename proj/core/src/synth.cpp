#include "sspnet/synth.hpp"

#include <algorithm>
#include <cmath>

#include "sspnet/rng.hpp"

namespace ssp {

namespace {

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

void blend_max(float& dst, double v) {
  const float f = clamp01(v);
  if (f > dst) dst = f;
}

// Soft solid spheres ("nucleolus-like").
void render_spheres(Volume& out, Rng& rng, double scale) {
  const int count = 6 + static_cast<int>(rng.next_below(4));
  for (int i = 0; i < count; ++i) {
    const double cz = rng.uniform(0.12, 0.88) * static_cast<double>(out.depth - 1);
    const double cy = rng.uniform(0.08, 0.92) * static_cast<double>(out.height - 1);
    const double cx = rng.uniform(0.08, 0.92) * static_cast<double>(out.width - 1);
    const double rad = rng.uniform(3.5, 6.5) * scale;
    const double falloff = 1.5;
    const int64_t z0 = std::max<int64_t>(0, static_cast<int64_t>(cz - rad - falloff));
    const int64_t z1 = std::min(out.depth - 1, static_cast<int64_t>(cz + rad + falloff) + 1);
    const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(cy - rad - falloff));
    const int64_t y1 = std::min(out.height - 1, static_cast<int64_t>(cy + rad + falloff) + 1);
    const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(cx - rad - falloff));
    const int64_t x1 = std::min(out.width - 1, static_cast<int64_t>(cx + rad + falloff) + 1);
    for (int64_t z = z0; z <= z1; ++z)
      for (int64_t y = y0; y <= y1; ++y)
        for (int64_t x = x0; x <= x1; ++x) {
          const double dz = static_cast<double>(z) - cz;
          const double dy = static_cast<double>(y) - cy;
          const double dx = static_cast<double>(x) - cx;
          const double d = std::sqrt(dz * dz + dy * dy + dx * dx);
          blend_max(out.at(z, y, x), (rad - d) / falloff);
        }
  }
}

// Hollow ellipsoidal shells ("nuclear-envelope-like"), squashed in Z so
// they fit shallow stacks.
void render_shells(Volume& out, Rng& rng, double scale) {
  const int count = 2 + static_cast<int>(rng.next_below(2));
  for (int i = 0; i < count; ++i) {
    const double cz = rng.uniform(0.25, 0.75) * static_cast<double>(out.depth - 1);
    const double cy = rng.uniform(0.2, 0.8) * static_cast<double>(out.height - 1);
    const double cx = rng.uniform(0.2, 0.8) * static_cast<double>(out.width - 1);
    const double rad = rng.uniform(7.0, 12.0) * scale;
    const double zsquash = rng.uniform(1.2, 1.8);
    const double thick = 2.2;
    const double zreach = (rad + thick) / zsquash;
    const int64_t z0 = std::max<int64_t>(0, static_cast<int64_t>(cz - zreach));
    const int64_t z1 = std::min(out.depth - 1, static_cast<int64_t>(cz + zreach) + 1);
    const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(cy - rad - thick));
    const int64_t y1 = std::min(out.height - 1, static_cast<int64_t>(cy + rad + thick) + 1);
    const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(cx - rad - thick));
    const int64_t x1 = std::min(out.width - 1, static_cast<int64_t>(cx + rad + thick) + 1);
    for (int64_t z = z0; z <= z1; ++z)
      for (int64_t y = y0; y <= y1; ++y)
        for (int64_t x = x0; x <= x1; ++x) {
          const double dz = (static_cast<double>(z) - cz) * zsquash;
          const double dy = static_cast<double>(y) - cy;
          const double dx = static_cast<double>(x) - cx;
          const double d = std::sqrt(dz * dz + dy * dy + dx * dx);
          blend_max(out.at(z, y, x), 1.0 - std::abs(d - rad) / thick);
        }
  }
}

// Random-walk filaments ("microtubule-like").
void render_tubes(Volume& out, Rng& rng, double scale) {
  const int count = 4 + static_cast<int>(rng.next_below(3));
  const double rad = 2.0 * scale;
  for (int i = 0; i < count; ++i) {
    double z = rng.uniform(0.15, 0.85) * static_cast<double>(out.depth - 1);
    double y = rng.uniform(0.1, 0.9) * static_cast<double>(out.height - 1);
    double x = rng.uniform(0.1, 0.9) * static_cast<double>(out.width - 1);
    double dz = rng.normal(0, 0.35), dy = rng.normal(0, 1), dx = rng.normal(0, 1);
    const int steps = 60 + static_cast<int>(rng.next_below(40));
    for (int s = 0; s < steps; ++s) {
      const double norm = std::sqrt(dz * dz + dy * dy + dx * dx) + 1e-9;
      z += dz / norm;
      y += dy / norm;
      x += dx / norm;
      dz += rng.normal(0, 0.12);
      dy += rng.normal(0, 0.3);
      dx += rng.normal(0, 0.3);
      if (z < 1 || z > out.depth - 2) dz = -dz;
      if (y < 1 || y > out.height - 2) dy = -dy;
      if (x < 1 || x > out.width - 2) dx = -dx;
      z = std::clamp(z, 0.0, static_cast<double>(out.depth - 1));
      y = std::clamp(y, 0.0, static_cast<double>(out.height - 1));
      x = std::clamp(x, 0.0, static_cast<double>(out.width - 1));
      const int64_t bz0 = std::max<int64_t>(0, static_cast<int64_t>(z - rad - 1));
      const int64_t bz1 = std::min(out.depth - 1, static_cast<int64_t>(z + rad + 1) + 1);
      const int64_t by0 = std::max<int64_t>(0, static_cast<int64_t>(y - rad - 1));
      const int64_t by1 = std::min(out.height - 1, static_cast<int64_t>(y + rad + 1) + 1);
      const int64_t bx0 = std::max<int64_t>(0, static_cast<int64_t>(x - rad - 1));
      const int64_t bx1 = std::min(out.width - 1, static_cast<int64_t>(x + rad + 1) + 1);
      for (int64_t vz = bz0; vz <= bz1; ++vz)
        for (int64_t vy = by0; vy <= by1; ++vy)
          for (int64_t vx = bx0; vx <= bx1; ++vx) {
            const double ddz = static_cast<double>(vz) - z;
            const double ddy = static_cast<double>(vy) - y;
            const double ddx = static_cast<double>(vx) - x;
            const double d = std::sqrt(ddz * ddz + ddy * ddy + ddx * ddx);
            blend_max(out.at(vz, vy, vx), (rad - d) / 0.8);
          }
    }
  }
}

Volume render_structure(uint64_t seed, int task, int64_t d, int64_t h, int64_t w) {
  Volume out(d, h, w, 0.29f, 0.29f, 0.29f);
  Rng rng(mix_seed(mix_seed(seed, 0xA11CEull), static_cast<uint64_t>(task)));
  const int kind = task % 3;
  const double scale = 1.0 + 0.15 * static_cast<double>(task / 3);
  switch (kind) {
    case 0: render_spheres(out, rng, scale); break;
    case 1: render_shells(out, rng, scale); break;
    default: render_tubes(out, rng, scale); break;
  }
  return out;
}

void blur_axis(Volume& v, const std::vector<double>& kernel, int axis) {
  const int radius = static_cast<int>(kernel.size() / 2);
  const int64_t ext[3] = {v.depth, v.height, v.width};
  Volume tmp = v;
  for (int64_t z = 0; z < v.depth; ++z)
    for (int64_t y = 0; y < v.height; ++y)
      for (int64_t x = 0; x < v.width; ++x) {
        int64_t idx[3] = {z, y, x};
        double acc = 0;
        for (int t = -radius; t <= radius; ++t) {
          int64_t p = std::clamp<int64_t>(idx[axis] + t, 0, ext[axis] - 1);
          int64_t c[3] = {z, y, x};
          c[axis] = p;
          acc += kernel[static_cast<size_t>(t + radius)] *
                 static_cast<double>(tmp.at(c[0], c[1], c[2]));
        }
        v.at(z, y, x) = static_cast<float>(acc);
      }
}

}  // namespace

Volume gaussian_blur(const Volume& v, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(2.5 * sigma)));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double sum = 0;
  for (int t = -radius; t <= radius; ++t) {
    const double w = std::exp(-0.5 * (t / sigma) * (t / sigma));
    kernel[static_cast<size_t>(t + radius)] = w;
    sum += w;
  }
  for (auto& w : kernel) w /= sum;
  Volume out = v;
  for (int axis = 0; axis < 3; ++axis) blur_axis(out, kernel, axis);
  return out;
}

Sample synth_sample(uint64_t seed, int task, int task_count, int64_t depth, int64_t height,
                    int64_t width, int r) {
  check(task_count >= 1 && task_count <= kMaxSynthTasks, errc::label,
        "task_count must be in [1," + std::to_string(kMaxSynthTasks) + "], got " +
            std::to_string(task_count));
  check(task >= 0 && task < task_count, errc::label,
        "task " + std::to_string(task) + " out of range [0," + std::to_string(task_count) + ")");
  check(depth % r == 0, errc::geometry,
        "depth " + std::to_string(depth) + " not divisible by ratio " + std::to_string(r));

  Sample s;
  s.task = task;
  s.y = render_structure(seed, task, depth, height, width);

  // The input sees every family's structures; the target isolates one.
  Volume mix(depth, height, width, 0.29f, 0.29f, 0.29f);
  for (int t = 0; t < task_count; ++t) {
    const Volume st = t == task ? s.y : render_structure(seed, t, depth, height, width);
    for (size_t i = 0; i < mix.data.size(); ++i) mix.data[i] += st.data[i];
  }
  Volume tl = gaussian_blur(mix, 0.9);
  Rng noise(mix_seed(seed, 0x701EEull));
  for (int64_t z = 0; z < depth; ++z) {
    const float zslope =
        0.3f * static_cast<float>(z) / static_cast<float>(std::max<int64_t>(1, depth - 1));
    for (int64_t y = 0; y < height; ++y)
      for (int64_t x = 0; x < width; ++x)
        tl.at(z, y, x) += zslope + static_cast<float>(noise.normal(0.0, 0.05));
  }
  s.x = sparsify(zscore(tl), r);
  return s;
}

}  // namespace ssp
