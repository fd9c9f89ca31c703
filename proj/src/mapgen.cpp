#include "mapsam/mapgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mapsam/rng.hpp"
#include "mapsam/tensor.hpp"  // error types

namespace mapsam {

namespace {

namespace fs = std::filesystem;

struct IVec {
  int x = 0, y = 0;
};

// Exact squared distance from pixel p to segment a-b as a rational num/den.
struct RationalDist {
  std::int64_t num = 0;
  std::int64_t den = 1;
};

RationalDist dist2_to_segment(IVec p, IVec a, IVec b) {
  const std::int64_t abx = b.x - a.x, aby = b.y - a.y;
  const std::int64_t apx = p.x - a.x, apy = p.y - a.y;
  const std::int64_t abb = abx * abx + aby * aby;
  const std::int64_t tnum = apx * abx + apy * aby;
  if (abb == 0 || tnum <= 0) return {apx * apx + apy * apy, 1};
  if (tnum >= abb) {
    const std::int64_t bpx = p.x - b.x, bpy = p.y - b.y;
    return {bpx * bpx + bpy * bpy, 1};
  }
  return {(apx * apx + apy * apy) * abb - tnum * tnum, abb};
}

// d <= r  <=>  num <= r^2 * den   (r integer)
bool within(const RationalDist& d, std::int64_t r2_scaled_num,
            std::int64_t r2_scaled_den = 1) {
  return d.num * r2_scaled_den <= r2_scaled_num * d.den;
}

// 64-entry integer cos/sin table scaled by 1024; keeps vertex placement
// integer-only.
constexpr int kAngleSteps = 64;
int costab(int a) {
  static const int tab[kAngleSteps] = {
      1024, 1019, 1004, 979,  946,  903,  851,  792,  724,  650,  569,  483,
      392,  297,  200,  100,  0,    -100, -200, -297, -392, -483, -569, -650,
      -724, -792, -851, -903, -946, -979, -1004, -1019, -1024, -1019, -1004,
      -979, -946, -903, -851, -792, -724, -650, -569, -483, -392, -297, -200,
      -100, 0,    100,  200,  297,  392,  483,  569,  650,  724,  792,  851,
      903,  946,  979,  1004, 1019};
  return tab[((a % kAngleSteps) + kAngleSteps) % kAngleSteps];
}
int sintab(int a) { return costab(a - 16); }

struct Canvas {
  int size;
  std::vector<std::uint8_t> rgb;
  explicit Canvas(int s) : size(s), rgb(static_cast<std::size_t>(s) * s * 3, 0) {}
  void set(int x, int y, int r, int g, int b) {
    if (x < 0 || y < 0 || x >= size || y >= size) return;
    const std::size_t i = (static_cast<std::size_t>(y) * size + x) * 3;
    rgb[i] = static_cast<std::uint8_t>(std::clamp(r, 0, 255));
    rgb[i + 1] = static_cast<std::uint8_t>(std::clamp(g, 0, 255));
    rgb[i + 2] = static_cast<std::uint8_t>(std::clamp(b, 0, 255));
  }
};

// Fixed-point bilinear value noise on a 16 px lattice, range about [-14, 14].
int parchment_noise(std::uint64_t seed, int x, int y) {
  const int cell = 16;
  const int cx = x / cell, cy = y / cell;
  const int fx = x % cell, fy = y % cell;
  auto corner = [&](int gx, int gy) {
    return static_cast<int>(hash64(hash_combine(seed, (static_cast<std::uint64_t>(gx) << 20) ^
                                                          static_cast<std::uint64_t>(gy))) %
                            29) -
           14;
  };
  const int v00 = corner(cx, cy), v10 = corner(cx + 1, cy);
  const int v01 = corner(cx, cy + 1), v11 = corner(cx + 1, cy + 1);
  const int top = v00 * (cell - fx) + v10 * fx;
  const int bot = v01 * (cell - fx) + v11 * fx;
  return (top * (cell - fy) + bot * fy) / (cell * cell);
}

void paint_background(Canvas& canvas, std::uint64_t seed) {
  const int s = canvas.size;
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const int n = parchment_noise(seed, x, y);
      const int jitter =
          static_cast<int>(hash64(hash_combine(seed ^ 0x5eedULL,
                                               (static_cast<std::uint64_t>(x) << 20) ^
                                                   static_cast<std::uint64_t>(y))) %
                           7) -
          3;
      canvas.set(x, y, 233 + n + jitter, 222 + n + jitter, 198 + n + jitter);
    }
  }
}

constexpr int kInkR = 58, kInkG = 50, kInkB = 46;          // lines, rails, glyphs
constexpr int kStrokeR = 70, kStrokeG = 78, kStrokeB = 60;  // vineyard hatch

// Thin stroke: all pixels within distance 1 of the segment chain.
void draw_polyline(Canvas& canvas, const std::vector<IVec>& pts) {
  const int s = canvas.size;
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        const auto d = dist2_to_segment({x, y}, pts[k], pts[k + 1]);
        if (within(d, 1)) {
          canvas.set(x, y, kInkR, kInkG, kInkB);
          break;
        }
      }
    }
}

void draw_glyph_cluster(Canvas& canvas, Rng& rng) {
  const int s = canvas.size;
  const int cx = rng.range(4, s - 5), cy = rng.range(4, s - 5);
  const int count = rng.range(2, 4);
  for (int g = 0; g < count; ++g) {
    const int gx = cx + rng.range(-6, 6), gy = cy + rng.range(-3, 3);
    const int w = rng.range(1, 3), h = rng.range(1, 3);
    for (int y = gy; y < gy + h; ++y)
      for (int x = gx; x < gx + w; ++x) canvas.set(x, y, kInkR, kInkG, kInkB);
  }
}

std::vector<IVec> random_crossing_polyline(Rng& rng, int s) {
  // two points on opposite edges plus a perturbed midpoint
  IVec p0, p1;
  if (rng.bounded(2) == 0) {  // left -> right
    p0 = {0, rng.range(6, s - 7)};
    p1 = {s - 1, rng.range(6, s - 7)};
  } else {  // top -> bottom
    p0 = {rng.range(6, s - 7), 0};
    p1 = {rng.range(6, s - 7), s - 1};
  }
  IVec mid{(p0.x + p1.x) / 2 + rng.range(-6, 6), (p0.y + p1.y) / 2 + rng.range(-6, 6)};
  mid.x = std::clamp(mid.x, 1, s - 2);
  mid.y = std::clamp(mid.y, 1, s - 2);
  return {p0, mid, p1};
}

// Railway band geometry: gt is every pixel within distance 3 of the
// centerline; the rails are the 2..3 annulus drawn in ink.
void rasterize_railway(Canvas& canvas, std::vector<std::uint8_t>& gt,
                       const std::vector<IVec>& center) {
  const int s = canvas.size;
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      RationalDist best{1 << 30, 1};
      for (std::size_t k = 0; k + 1 < center.size(); ++k) {
        const auto d = dist2_to_segment({x, y}, center[k], center[k + 1]);
        if (d.num * best.den < best.num * d.den) best = d;
      }
      if (within(best, 9)) {
        gt[static_cast<std::size_t>(y) * s + x] = 1;
        if (!within(best, 4)) canvas.set(x, y, kInkR, kInkG, kInkB);
      }
    }
}

struct Polygon {
  std::vector<IVec> pts;

  bool contains(int px, int py) const {
    bool inside = false;
    const std::size_t n = pts.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const int x1 = pts[j].x, y1 = pts[j].y, x2 = pts[i].x, y2 = pts[i].y;
      if ((y1 > py) == (y2 > py)) continue;
      // px < x1 + (py - y1) * (x2 - x1) / (y2 - y1), evaluated exactly
      const std::int64_t lhs = static_cast<std::int64_t>(px - x1) * (y2 - y1);
      const std::int64_t rhs = static_cast<std::int64_t>(py - y1) * (x2 - x1);
      if (y2 > y1 ? lhs < rhs : lhs > rhs) inside = !inside;
    }
    return inside;
  }
};

Polygon random_star_polygon(Rng& rng, int s) {
  // star polygon around a center: simple by construction
  const int cx = rng.range(s * 3 / 8, s * 5 / 8);
  const int cy = rng.range(s * 3 / 8, s * 5 / 8);
  const int nv = rng.range(5, 8);
  const int rlo = s * 11 / 64, rhi = s * 22 / 64;
  Polygon poly;
  int angle = rng.range(0, kAngleSteps - 1);
  for (int i = 0; i < nv; ++i) {
    const int r = rng.range(rlo, rhi);
    poly.pts.push_back({cx + r * costab(angle) / 1024, cy + r * sintab(angle) / 1024});
    angle += kAngleSteps / nv;
  }
  return poly;
}

void rasterize_vineyard(Canvas& canvas, std::vector<std::uint8_t>& gt,
                        const Polygon& poly, Rng& rng) {
  const int s = canvas.size;
  const int period = rng.range(3, 4);
  const int xphase = rng.range(0, period - 1);
  const int run = rng.range(3, 5);
  const int yphase = rng.range(0, run);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      if (!poly.contains(x, y)) continue;
      gt[static_cast<std::size_t>(y) * s + x] = 1;
      const bool on_column = (x + xphase) % period == 0;
      const bool on_run = ((y + yphase) / run) % 2 == 0;
      if (on_column && on_run) canvas.set(x, y, kStrokeR, kStrokeG, kStrokeB);
    }
}

void draw_distractors(Canvas& canvas, Rng& rng) {
  const int s = canvas.size;
  const int lines = rng.range(2, 5);
  for (int i = 0; i < lines; ++i) {
    IVec a{rng.range(0, s - 1), rng.range(0, s - 1)};
    IVec b{rng.range(0, s - 1), rng.range(0, s - 1)};
    draw_polyline(canvas, {a, b});
  }
  const int glyphs = rng.range(2, 4);
  for (int i = 0; i < glyphs; ++i) draw_glyph_cluster(canvas, rng);
}

void check_size(int size) {
  if (size < 32)
    throw ShapeError("tile size must be >= 32, got " + std::to_string(size));
}

Tile make_tile(const std::string& cls, std::uint64_t seed, int size) {
  Tile t;
  t.width = t.height = size;
  t.feature_class = cls;
  t.seed = seed;
  t.gt.assign(static_cast<std::size_t>(size) * size, 0);
  return t;
}

}  // namespace

Tile gen_railway(std::uint64_t seed, int size) {
  check_size(size);
  Tile tile = make_tile("railway", seed, size);
  Rng rng(hash_combine(seed, hash_string("railway")));
  Canvas canvas(size);
  paint_background(canvas, hash_combine(seed, 1));
  draw_distractors(canvas, rng);
  rasterize_railway(canvas, tile.gt, random_crossing_polyline(rng, size));
  tile.raster = std::move(canvas.rgb);
  return tile;
}

Tile gen_vineyard(std::uint64_t seed, int size) {
  check_size(size);
  Tile tile = make_tile("vineyard", seed, size);
  Rng rng(hash_combine(seed, hash_string("vineyard")));
  Canvas canvas(size);
  paint_background(canvas, hash_combine(seed, 1));
  draw_distractors(canvas, rng);
  rasterize_vineyard(canvas, tile.gt, random_star_polygon(rng, size), rng);
  tile.raster = std::move(canvas.rgb);
  return tile;
}

Tile gen_texture(std::uint64_t seed, int size) {
  check_size(size);
  Tile tile = make_tile("texture", seed, size);
  Rng rng(hash_combine(seed, hash_string("texture")));
  Canvas canvas(size);
  paint_background(canvas, hash_combine(seed, 1));
  draw_distractors(canvas, rng);
  // extra vocabulary: parallel band or hatched region, unlabeled
  std::vector<std::uint8_t> scratch(static_cast<std::size_t>(size) * size, 0);
  if (rng.bounded(2) == 0)
    rasterize_railway(canvas, scratch, random_crossing_polyline(rng, size));
  if (rng.bounded(2) == 0)
    rasterize_vineyard(canvas, scratch, random_star_polygon(rng, size), rng);
  tile.raster = std::move(canvas.rgb);
  return tile;
}

Tile gen_tile(const std::string& feature_class, std::uint64_t seed, int size) {
  if (feature_class == "railway") return gen_railway(seed, size);
  if (feature_class == "vineyard") return gen_vineyard(seed, size);
  if (feature_class == "texture") return gen_texture(seed, size);
  throw ShapeError("unknown feature class '" + feature_class + "'");
}

// ---------------------------------------------------------------------------
// PPM / PGM
// ---------------------------------------------------------------------------

namespace {

void write_pnm(const std::string& path, const char* magic,
               const std::uint8_t* bytes, int w, int h, int channels) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << magic << "\n" << w << " " << h << "\n255\n";
  f.write(reinterpret_cast<const char*>(bytes),
          static_cast<std::streamsize>(w) * h * channels);
  if (!f) throw std::runtime_error("short write to " + path);
}

std::vector<std::uint8_t> read_pnm(const std::string& path, const char* magic,
                                   int channels, int& w, int& h) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::string m;
  f >> m;
  if (m != magic)
    throw std::runtime_error(path + ": expected " + magic + ", got " + m);
  int maxval = 0;
  f >> w >> h >> maxval;
  if (!f || w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error(path + ": bad header");
  f.get();  // single whitespace after maxval
  std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h * channels);
  f.read(reinterpret_cast<char*>(data.data()),
         static_cast<std::streamsize>(data.size()));
  if (!f) throw std::runtime_error(path + ": truncated pixel data");
  return data;
}

}  // namespace

void write_ppm(const std::string& path, const std::uint8_t* rgb, int w, int h) {
  write_pnm(path, "P6", rgb, w, h, 3);
}

void write_pgm(const std::string& path, const std::uint8_t* gray, int w, int h) {
  write_pnm(path, "P5", gray, w, h, 1);
}

std::vector<std::uint8_t> read_ppm(const std::string& path, int& w, int& h) {
  return read_pnm(path, "P6", 3, w, h);
}

std::vector<std::uint8_t> read_pgm(const std::string& path, int& w, int& h) {
  return read_pnm(path, "P5", 1, w, h);
}

// ---------------------------------------------------------------------------
// datasets
// ---------------------------------------------------------------------------

std::vector<const ManifestEntry*> Dataset::split(const std::string& name) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == name) out.push_back(&e);
  return out;
}

Dataset build_dataset(const std::string& feature_class, int train_count,
                      int val_count, int test_count, std::uint64_t root_seed,
                      int size, const std::string& out_dir) {
  if (train_count <= 0 || val_count <= 0 || test_count <= 0)
    throw ShapeError("build_dataset: split counts must be positive");
  fs::create_directories(fs::path(out_dir) / "imgs");
  fs::create_directories(fs::path(out_dir) / "masks");

  Dataset ds;
  ds.root = out_dir;
  const int total = train_count + val_count + test_count;
  for (int i = 0; i < total; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%05d", feature_class.c_str(), i);
    ManifestEntry e;
    e.id = buf;
    e.feature_class = feature_class;
    e.seed = hash_combine(root_seed, hash_string(e.id));
    e.split = i < train_count ? "train" : (i < train_count + val_count ? "val" : "test");
    e.raster_path = "imgs/" + e.id + ".ppm";
    e.mask_path = "masks/" + e.id + ".pgm";
    const Tile tile = gen_tile(feature_class, e.seed, size);
    write_ppm((fs::path(out_dir) / e.raster_path).string(), tile.raster.data(),
              tile.width, tile.height);
    std::vector<std::uint8_t> mask255(tile.gt.size());
    for (std::size_t p = 0; p < tile.gt.size(); ++p)
      mask255[p] = tile.gt[p] ? 255 : 0;
    write_pgm((fs::path(out_dir) / e.mask_path).string(), mask255.data(),
              tile.width, tile.height);
    ds.entries.push_back(std::move(e));
  }
  save_manifest(ds, (fs::path(out_dir) / "manifest.txt").string());
  return ds;
}

void save_manifest(const Dataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  for (const auto& e : ds.entries)
    f << e.id << " " << e.feature_class << " " << e.seed << " " << e.split
      << " " << e.raster_path << " " << e.mask_path << "\n";
}

Dataset load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read manifest " + path);
  Dataset ds;
  ds.root = fs::path(path).parent_path().string();
  if (ds.root.empty()) ds.root = ".";
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    ManifestEntry e;
    if (!(is >> e.id >> e.feature_class >> e.seed >> e.split >> e.raster_path >>
          e.mask_path))
      throw std::runtime_error(path + ": malformed manifest line: " + line);
    ds.entries.push_back(std::move(e));
  }
  return ds;
}

namespace {

Dataset keep_train_subset(const Dataset& ds, const std::vector<std::string>& keep) {
  Dataset out;
  out.root = ds.root;
  for (const auto& e : ds.entries) {
    if (e.split != "train" ||
        std::find(keep.begin(), keep.end(), e.id) != keep.end())
      out.entries.push_back(e);
  }
  return out;
}

}  // namespace

Dataset subsample_kshot(const Dataset& ds, int k, std::uint64_t seed) {
  std::vector<std::string> train_ids;
  for (const auto& e : ds.entries)
    if (e.split == "train") train_ids.push_back(e.id);
  if (k < 0 || k > static_cast<int>(train_ids.size()))
    throw ShapeError("subsample_kshot: k=" + std::to_string(k) + " out of range for " +
                     std::to_string(train_ids.size()) + " train tiles");
  Rng rng(hash_combine(seed, hash_string("kshot")));
  rng.shuffle(train_ids);
  train_ids.resize(static_cast<std::size_t>(k));
  return keep_train_subset(ds, train_ids);
}

Dataset subsample_fraction(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw ShapeError("subsample_fraction: fraction must be in [0, 1]");
  std::vector<std::string> train_ids;
  for (const auto& e : ds.entries)
    if (e.split == "train") train_ids.push_back(e.id);
  const int k = static_cast<int>(fraction * static_cast<double>(train_ids.size()) + 0.5);
  return subsample_kshot(ds, k, seed);
}

Tile load_tile(const Dataset& ds, const ManifestEntry& entry) {
  Tile t;
  t.feature_class = entry.feature_class;
  t.seed = entry.seed;
  t.id = entry.id;
  int w = 0, h = 0;
  t.raster = read_ppm((fs::path(ds.root) / entry.raster_path).string(), w, h);
  t.width = w;
  t.height = h;
  int mw = 0, mh = 0;
  auto mask = read_pgm((fs::path(ds.root) / entry.mask_path).string(), mw, mh);
  if (mw != w || mh != h)
    throw std::runtime_error(entry.id + ": raster and mask dimensions differ");
  t.gt.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) t.gt[i] = mask[i] >= 128 ? 1 : 0;
  return t;
}

}  // namespace mapsam
