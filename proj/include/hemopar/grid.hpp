#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace hemopar {

// 2D voxel lattice with 4-neighbour connectivity. Voxel j sits at
// (x, y) = (j % width, j / width).
class Grid2D {
public:
  Grid2D() = default;
  Grid2D(int width, int height);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(width_) * height_; }

  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * width_ + x;
  }
  int x_of(std::size_t j) const noexcept { return static_cast<int>(j % width_); }
  int y_of(std::size_t j) const noexcept { return static_cast<int>(j / width_); }

  // Neighbours of j in ascending index order.
  std::vector<std::size_t> neighbors(std::size_t j) const;

  // Each undirected edge once, as (lo, hi) with lo < hi, sorted.
  std::vector<std::pair<std::size_t, std::size_t>> edges() const;

  bool operator==(const Grid2D&) const = default;

private:
  int width_ = 0;
  int height_ = 0;
};

// Number of 4-connected components of each label value, indexed by label.
std::vector<int> connected_components_per_label(const Grid2D& grid, const std::vector<int>& labels);

}  // namespace hemopar
