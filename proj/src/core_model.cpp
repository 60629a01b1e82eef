#include "lfbit/core_model.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "csv_util.hpp"
#include "lfbit/error.hpp"

namespace lfbit {

SaiGridDims::SaiGridDims(int rows, int cols, int height, int width)
    : rows_(rows), cols_(cols), height_(height), width_(width) {
  require(rows >= 1 && cols >= 1, "angular grid dimensions must be >= 1");
  require(height >= 1 && width >= 1, "SAI pixel dimensions must be >= 1");
}

namespace {

void check_grid(AngularGrid grid) {
  require(grid.rows >= 1 && grid.cols >= 1, "angular grid dimensions must be >= 1");
}

bool in_grid(AngularGrid grid, Cell c) {
  return c.row >= 0 && c.row < grid.rows && c.col >= 0 && c.col < grid.cols;
}

}  // namespace

ConfidenceGrid::ConfidenceGrid(AngularGrid grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  check_grid(grid);
  require(values_.size() == static_cast<std::size_t>(grid.cells()),
          "confidence grid size does not match its shape");
  for (double w : values_)
    require(w >= 0.0 && w <= 1.0, "confidence values must lie in [0,1]");
}

ConfidenceGrid ConfidenceGrid::uniform(AngularGrid grid, double value) {
  check_grid(grid);
  return ConfidenceGrid(grid, std::vector<double>(grid.cells(), value));
}

ConfidenceGrid ConfidenceGrid::rescaled(AngularGrid grid, const std::vector<double>& raw) {
  check_grid(grid);
  require(raw.size() == static_cast<std::size_t>(grid.cells()),
          "confidence grid size does not match its shape");
  auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double min = *lo;
  const double max = *hi;
  std::vector<double> out(raw.size(), 1.0);
  if (max > min) {
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - min) / (max - min);
  }
  return ConfidenceGrid(grid, std::move(out));
}

std::size_t ConfidenceGrid::index(Cell c) const {
  require(in_grid(grid_, c), "cell outside confidence grid");
  return static_cast<std::size_t>(c.row) * grid_.cols + c.col;
}

ConfidenceGrid load_confidence(std::istream& in) {
  std::vector<double> raw;
  int cols = -1;
  int rows = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    auto fields = detail::split_fields(line);
    const auto where = detail::line_ref("confidence", line_no);
    if (cols < 0) {
      cols = static_cast<int>(fields.size());
    } else if (static_cast<int>(fields.size()) != cols) {
      fail(ErrorKind::parse, where + ": ragged row (" + std::to_string(fields.size()) +
                                 " columns, expected " + std::to_string(cols) + ")");
    }
    for (auto f : fields) raw.push_back(detail::parse_double(f, where));
    ++rows;
  }
  if (rows == 0) fail(ErrorKind::parse, "confidence: empty grid");
  return ConfidenceGrid::rescaled({rows, cols}, raw);
}

ConfidenceGrid load_confidence(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open confidence file " + path.string());
  return load_confidence(in);
}

void write_confidence(std::ostream& out, const ConfidenceGrid& grid) {
  std::ostringstream os;
  os.precision(17);
  for (int k = 0; k < grid.grid().rows; ++k) {
    for (int l = 0; l < grid.grid().cols; ++l) {
      if (l) os << ',';
      os << grid.at({k, l});
    }
    os << '\n';
  }
  out << os.str();
}

ScanKind parse_scan_kind(std::string_view name) {
  if (name == "raster") return ScanKind::raster;
  if (name == "snake") return ScanKind::snake;
  if (name == "spiral") return ScanKind::spiral;
  if (name == "custom") return ScanKind::custom;
  fail(ErrorKind::invalid_argument, "unknown scan order '" + std::string(name) + "'");
}

std::string to_string(ScanKind kind) {
  switch (kind) {
    case ScanKind::raster: return "raster";
    case ScanKind::snake: return "snake";
    case ScanKind::spiral: return "spiral";
    case ScanKind::custom: return "custom";
  }
  return "?";
}

ScanOrder ScanOrder::from_cells(ScanKind kind, AngularGrid grid, std::vector<Cell> cells) {
  check_grid(grid);
  if (static_cast<int>(cells.size()) > grid.cells())
    fail(ErrorKind::invalid_argument, "scan order has more frames than grid cells");
  std::vector<int> frame_of_cell(grid.cells(), -1);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell c = cells[i];
    if (!in_grid(grid, c))
      fail(ErrorKind::invalid_argument,
           "scan order maps frame " + std::to_string(i + 1) + " outside the grid");
    int& slot = frame_of_cell[static_cast<std::size_t>(c.row) * grid.cols + c.col];
    if (slot >= 0)
      fail(ErrorKind::invalid_argument, "scan order is not injective: frames " +
                                            std::to_string(slot + 1) + " and " +
                                            std::to_string(i + 1) + " share a cell");
    slot = static_cast<int>(i);
  }
  return ScanOrder(kind, grid, std::move(cells), std::move(frame_of_cell));
}

Cell ScanOrder::cell(int frame) const {
  require(frame >= 0 && frame < frame_count(), "frame index outside scan order");
  return cells_[frame];
}

std::optional<int> ScanOrder::frame_at(Cell c) const {
  if (!in_grid(grid_, c)) return std::nullopt;
  int f = frame_of_cell_[static_cast<std::size_t>(c.row) * grid_.cols + c.col];
  if (f < 0) return std::nullopt;
  return f;
}

namespace {

std::vector<Cell> spiral_cells(AngularGrid grid) {
  std::vector<Cell> out;
  out.reserve(grid.cells());
  Cell pos{(grid.rows - 1) / 2, (grid.cols - 1) / 2};
  // right, down, left, up
  constexpr int dr[4] = {0, 1, 0, -1};
  constexpr int dc[4] = {1, 0, -1, 0};
  out.push_back(pos);
  int dir = 0;
  int run = 1;
  while (static_cast<int>(out.size()) < grid.cells()) {
    for (int rep = 0; rep < 2; ++rep) {
      for (int s = 0; s < run; ++s) {
        pos.row += dr[dir];
        pos.col += dc[dir];
        if (in_grid(grid, pos)) out.push_back(pos);
      }
      dir = (dir + 1) % 4;
    }
    ++run;
  }
  return out;
}

}  // namespace

ScanOrder build_scan_order(ScanKind kind, AngularGrid grid, int frame_count) {
  check_grid(grid);
  require(frame_count >= 1, "frame count must be >= 1");
  if (frame_count > grid.cells())
    fail(ErrorKind::invalid_argument, "frame count " + std::to_string(frame_count) +
                                          " exceeds grid cells " +
                                          std::to_string(grid.cells()));
  std::vector<Cell> cells;
  switch (kind) {
    case ScanKind::raster:
      for (int k = 0; k < grid.rows; ++k)
        for (int l = 0; l < grid.cols; ++l) cells.push_back({k, l});
      break;
    case ScanKind::snake:
      for (int k = 0; k < grid.rows; ++k)
        for (int i = 0; i < grid.cols; ++i)
          cells.push_back({k, (k % 2 == 0) ? i : grid.cols - 1 - i});
      break;
    case ScanKind::spiral:
      cells = spiral_cells(grid);
      break;
    case ScanKind::custom:
      fail(ErrorKind::invalid_argument, "custom scan order requires a mapping file");
  }
  cells.resize(frame_count);
  return ScanOrder::from_cells(kind, grid, std::move(cells));
}

ScanOrder load_scan_order(std::istream& in, AngularGrid grid) {
  check_grid(grid);
  std::vector<std::optional<Cell>> by_frame;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    auto fields = detail::split_fields(line);
    const auto where = detail::line_ref("scan order", line_no);
    if (line_no == 1 && !fields.empty() && fields[0] == "frame_index") continue;
    if (fields.size() != 3) fail(ErrorKind::parse, where + ": expected frame_index,k,l");
    const auto frame = detail::parse_int(fields[0], where);
    const auto k = detail::parse_int(fields[1], where);
    const auto l = detail::parse_int(fields[2], where);
    if (frame < 1 || frame > grid.cells())
      fail(ErrorKind::invalid_argument, where + ": frame index out of range");
    if (k < 1 || k > grid.rows || l < 1 || l > grid.cols)
      fail(ErrorKind::invalid_argument, where + ": cell outside the grid");
    if (static_cast<std::size_t>(frame) > by_frame.size()) by_frame.resize(frame);
    auto& slot = by_frame[frame - 1];
    if (slot) fail(ErrorKind::invalid_argument, where + ": duplicate frame index");
    slot = Cell{static_cast<int>(k - 1), static_cast<int>(l - 1)};
  }
  if (by_frame.empty()) fail(ErrorKind::parse, "scan order: empty mapping");
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < by_frame.size(); ++i) {
    if (!by_frame[i])
      fail(ErrorKind::invalid_argument,
           "scan order: frame " + std::to_string(i + 1) + " is not mapped");
    cells.push_back(*by_frame[i]);
  }
  return ScanOrder::from_cells(ScanKind::custom, grid, std::move(cells));
}

ScanOrder load_scan_order(const std::filesystem::path& path, AngularGrid grid) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open scan order file " + path.string());
  return load_scan_order(in, grid);
}

GopGrouping::GopGrouping(int frame_count, int gop_size)
    : frame_count_(frame_count), gop_size_(gop_size) {
  require(frame_count >= 1, "frame count must be >= 1");
  require(gop_size >= 1, "GOP size must be >= 1");
  for (int begin = 0; begin < frame_count; begin += gop_size)
    groups_.push_back({begin, std::min(begin + gop_size, frame_count)});
}

int GopGrouping::group_of(int frame) const {
  require(frame >= 0 && frame < frame_count_, "frame index outside grouping");
  return frame / gop_size_;
}

int GopGrouping::position_in_group(int frame) const {
  require(frame >= 0 && frame < frame_count_, "frame index outside grouping");
  return frame % gop_size_;
}

}  // namespace lfbit
