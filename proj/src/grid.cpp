#include "hemopar/grid.hpp"

#include <algorithm>
#include <numeric>

#include "hemopar/errors.hpp"

namespace hemopar {

Grid2D::Grid2D(int width, int height) : width_(width), height_(height) {
  if (width < 1 || height < 1) throw ConfigError("grid dimensions must be >= 1");
}

std::vector<std::size_t> Grid2D::neighbors(std::size_t j) const {
  std::vector<std::size_t> out;
  out.reserve(4);
  const int x = x_of(j), y = y_of(j);
  if (y > 0) out.push_back(index(x, y - 1));
  if (x > 0) out.push_back(index(x - 1, y));
  if (x + 1 < width_) out.push_back(index(x + 1, y));
  if (y + 1 < height_) out.push_back(index(x, y + 1));
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> Grid2D::edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t j = 0; j < size(); ++j)
    for (auto k : neighbors(j))
      if (j < k) out.emplace_back(j, k);
  return out;
}

std::vector<int> connected_components_per_label(const Grid2D& grid, const std::vector<int>& labels) {
  const int max_label = labels.empty() ? -1 : *std::max_element(labels.begin(), labels.end());
  std::vector<int> components(static_cast<std::size_t>(max_label + 1), 0);
  std::vector<char> seen(grid.size(), 0);
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < grid.size(); ++seed) {
    if (seen[seed]) continue;
    const int label = labels[seed];
    ++components[static_cast<std::size_t>(label)];
    seen[seed] = 1;
    stack.push_back(seed);
    while (!stack.empty()) {
      const auto j = stack.back();
      stack.pop_back();
      for (auto k : grid.neighbors(j)) {
        if (!seen[k] && labels[k] == label) {
          seen[k] = 1;
          stack.push_back(k);
        }
      }
    }
  }
  return components;
}

}  // namespace hemopar
