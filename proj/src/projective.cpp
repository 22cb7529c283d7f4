#include "elmap/projective.hpp"

#include <stdexcept>

namespace elmap {

DepthPooling::DepthPooling(const DepthImage& image)
    : width_(image.width()), height_(image.height())
{
  std::vector<Tile> base(static_cast<std::size_t>(width_) * height_);
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      Tile& t = base[static_cast<std::size_t>(r) * width_ + c];
      if (image.state(r, c) == PixelState::kInvalid) {
        t.has_invalid = true;
      } else {
        t.min_d = t.max_d = image.depth(r, c);
      }
    }
  }
  level_w_.push_back(width_);
  level_h_.push_back(height_);
  levels_.push_back(std::move(base));
  while (level_w_.back() > 1 || level_h_.back() > 1) {
    const int pw = level_w_.back();
    const int ph = level_h_.back();
    const int w = (pw + 1) / 2;
    const int h = (ph + 1) / 2;
    const std::vector<Tile>& prev = levels_.back();
    std::vector<Tile> cur(static_cast<std::size_t>(w) * h);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        Tile t;
        for (int dr = 0; dr < 2; ++dr) {
          for (int dc = 0; dc < 2; ++dc) {
            const int rr = 2 * r + dr;
            const int cc = 2 * c + dc;
            if (rr < ph && cc < pw) {
              t.merge(prev[static_cast<std::size_t>(rr) * pw + cc]);
            }
          }
        }
        cur[static_cast<std::size_t>(r) * w + c] = t;
      }
    }
    level_w_.push_back(w);
    level_h_.push_back(h);
    levels_.push_back(std::move(cur));
  }
}

DepthPooling::Tile DepthPooling::query_span(int r0, int r1, int c0, int c1) const
{
  // Pick the level where the span is covered by a handful of tiles; tiles are
  // rounded outward, so the aggregate is a conservative superset.
  const int span = std::max(r1 - r0, c1 - c0) + 1;
  int level = 0;
  while ((span >> level) > 4 && level + 1 < static_cast<int>(levels_.size())) {
    ++level;
  }
  const int w = level_w_[level];
  const int h = level_h_[level];
  Tile out;
  const int tr0 = std::max(0, r0 >> level);
  const int tr1 = std::min(h - 1, r1 >> level);
  const int tc0 = std::max(0, c0 >> level);
  const int tc1 = std::min(w - 1, c1 >> level);
  const std::vector<Tile>& tiles = levels_[level];
  for (int r = tr0; r <= tr1; ++r) {
    for (int c = tc0; c <= tc1; ++c) {
      out.merge(tiles[static_cast<std::size_t>(r) * w + c]);
    }
  }
  return out;
}

DepthPooling::Tile DepthPooling::query(int r0, int r1, int c0, int c1) const
{
  r0 = std::max(0, r0);
  r1 = std::min(height_ - 1, r1);
  if (r0 > r1) {
    return {};
  }
  if (c1 - c0 + 1 >= width_) {
    return query_span(r0, r1, 0, width_ - 1);
  }
  int a = c0 % width_;
  if (a < 0) {
    a += width_;
  }
  const int b = a + (c1 - c0);
  if (b < width_) {
    return query_span(r0, r1, a, b);
  }
  Tile out = query_span(r0, r1, a, width_ - 1);
  out.merge(query_span(r0, r1, 0, b - width_));
  return out;
}

void require_rigid(const Eigen::Isometry3f& T, const char* what)
{
  const Eigen::Matrix3f R = T.linear();
  const float orthogonality = (R * R.transpose() - Eigen::Matrix3f::Identity()).norm();
  if (orthogonality > 1e-3f || R.determinant() < 0.0f) {
    throw std::invalid_argument(std::string(what) + ": transform is not rigid");
  }
}

} // namespace elmap
