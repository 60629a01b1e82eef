#pragma once

#include <compare>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lfbit {

/// Angular (u,v) resolution of a light field: `rows` = K, `cols` = L.
struct AngularGrid {
  int rows = 1;
  int cols = 1;

  int cells() const { return rows * cols; }
  friend bool operator==(const AngularGrid&, const AngularGrid&) = default;
};

/// Angular grid plus the pixel size of every sub-aperture image.
class SaiGridDims {
 public:
  SaiGridDims(int rows, int cols, int height, int width);

  AngularGrid angular() const { return {rows_, cols_}; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int height() const { return height_; }
  int width() const { return width_; }

 private:
  int rows_;
  int cols_;
  int height_;
  int width_;
};

/// Zero-based (k,l) position on the angular grid.
struct Cell {
  int row = 0;
  int col = 0;

  friend auto operator<=>(const Cell&, const Cell&) = default;
};

/// Per-SAI average confidence, rescaled to [0,1].
class ConfidenceGrid {
 public:
  /// Values must already lie in [0,1]; row-major, rows*cols entries.
  ConfidenceGrid(AngularGrid grid, std::vector<double> values);

  static ConfidenceGrid uniform(AngularGrid grid, double value = 1.0);

  /// Affine rescale (x - min)/(max - min). An all-equal grid maps to all-ones.
  static ConfidenceGrid rescaled(AngularGrid grid, const std::vector<double>& raw);

  AngularGrid grid() const { return grid_; }
  double at(Cell c) const { return values_[index(c)]; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::size_t index(Cell c) const;

  AngularGrid grid_;
  std::vector<double> values_;
};

/// CSV: one line per grid row, comma separated, '.' decimal separator.
ConfidenceGrid load_confidence(std::istream& in);
ConfidenceGrid load_confidence(const std::filesystem::path& path);
void write_confidence(std::ostream& out, const ConfidenceGrid& grid);

enum class ScanKind { raster, snake, spiral, custom };

ScanKind parse_scan_kind(std::string_view name);
std::string to_string(ScanKind kind);

/// Injective map from frame index (temporal order) to angular cell.
class ScanOrder {
 public:
  /// Validates range and injectivity of `cells` (cells[i] is frame i).
  static ScanOrder from_cells(ScanKind kind, AngularGrid grid, std::vector<Cell> cells);

  ScanKind kind() const { return kind_; }
  AngularGrid grid() const { return grid_; }
  int frame_count() const { return static_cast<int>(cells_.size()); }
  Cell cell(int frame) const;
  std::optional<int> frame_at(Cell c) const;
  const std::vector<Cell>& cells() const { return cells_; }

 private:
  ScanOrder(ScanKind kind, AngularGrid grid, std::vector<Cell> cells,
            std::vector<int> frame_of_cell)
      : kind_(kind),
        grid_(grid),
        cells_(std::move(cells)),
        frame_of_cell_(std::move(frame_of_cell)) {}

  ScanKind kind_;
  AngularGrid grid_;
  std::vector<Cell> cells_;
  std::vector<int> frame_of_cell_;
};

/// Built-in orders. Spiral runs clockwise outward from the cell
/// (ceil(K/2), ceil(L/2)) in one-based terms; cells off-grid are skipped.
/// `custom` is rejected here, use load_scan_order.
ScanOrder build_scan_order(ScanKind kind, AngularGrid grid, int frame_count);

/// Custom order file: lines `frame_index,k,l`, all one-based. The frame indices
/// must be exactly 1..n.
ScanOrder load_scan_order(std::istream& in, AngularGrid grid);
ScanOrder load_scan_order(const std::filesystem::path& path, AngularGrid grid);

/// Half-open frame range [begin, end).
struct FrameRange {
  int begin = 0;
  int end = 0;

  int size() const { return end - begin; }
  friend bool operator==(const FrameRange&, const FrameRange&) = default;
};

/// Contiguous partition of the sequence into (virtual) GOPs.
class GopGrouping {
 public:
  GopGrouping(int frame_count, int gop_size);

  int frame_count() const { return frame_count_; }
  int gop_size() const { return gop_size_; }
  int group_count() const { return static_cast<int>(groups_.size()); }
  const std::vector<FrameRange>& groups() const { return groups_; }
  const FrameRange& group(int g) const { return groups_.at(g); }
  int group_of(int frame) const;
  int position_in_group(int frame) const;

 private:
  int frame_count_;
  int gop_size_;
  std::vector<FrameRange> groups_;
};

inline GopGrouping group_gops(int frame_count, int gop_size) {
  return GopGrouping(frame_count, gop_size);
}

}  // namespace lfbit
