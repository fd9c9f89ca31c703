#include "mapsam/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "mapsam/tensor.hpp"

namespace mapsam {

ConfusionCounts confusion(const std::vector<std::uint8_t>& pred,
                          const std::vector<std::uint8_t>& gt) {
  if (pred.size() != gt.size())
    throw ShapeError("confusion: size mismatch: " + std::to_string(pred.size()) +
                     " vs " + std::to_string(gt.size()));
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, g = gt[i] != 0;
    if (p && g) ++c.tp;
    else if (p && !g) ++c.fp;
    else if (!p && g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double iou(const ConfusionCounts& c) {
  const std::int64_t u = c.tp + c.fp + c.fn;
  if (u == 0) return 1.0;
  return static_cast<double>(c.tp) / static_cast<double>(u);
}

double f1(const ConfusionCounts& c) {
  const std::int64_t d = 2 * c.tp + c.fp + c.fn;
  if (d == 0) return 1.0;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(d);
}

std::string EvalReport::to_table(const std::string& title) const {
  std::ostringstream os;
  os << "== " << title << " ==\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-16s %10s %10s %8s %8s %8s %8s\n", "tile",
                "F1", "IoU", "tp", "fp", "fn", "tn");
  os << buf;
  for (const auto& t : per_tile) {
    std::snprintf(buf, sizeof(buf), "%-16s %10.6f %10.6f %8lld %8lld %8lld %8lld\n",
                  t.id.c_str(), f1(t.counts), iou(t.counts),
                  static_cast<long long>(t.counts.tp),
                  static_cast<long long>(t.counts.fp),
                  static_cast<long long>(t.counts.fn),
                  static_cast<long long>(t.counts.tn));
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "%-16s %10.6f %10.6f %8lld %8lld %8lld %8lld\n",
                "micro", micro_f1(), micro_iou(), static_cast<long long>(micro.tp),
                static_cast<long long>(micro.fp), static_cast<long long>(micro.fn),
                static_cast<long long>(micro.tn));
  os << buf;
  return os.str();
}

}  // namespace mapsam
