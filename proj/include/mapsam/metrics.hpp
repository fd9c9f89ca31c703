#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mapsam {

struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp; fp += o.fp; fn += o.fn; tn += o.tn;
    return *this;
  }
};

// Per-pixel tally; foreground = 1. Shapes must match.
ConfusionCounts confusion(const std::vector<std::uint8_t>& pred,
                          const std::vector<std::uint8_t>& gt);

// Empty-union convention: both metrics are 1 when tp+fp+fn = 0.
double iou(const ConfusionCounts& c);
double f1(const ConfusionCounts& c);

struct TileScore {
  std::string id;
  ConfusionCounts counts;
};

struct EvalReport {
  std::vector<TileScore> per_tile;
  ConfusionCounts micro;  // counts summed over all tiles

  double micro_iou() const { return iou(micro); }
  double micro_f1() const { return f1(micro); }
  std::string to_table(const std::string& title) const;
};

}  // namespace mapsam
