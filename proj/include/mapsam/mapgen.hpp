#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mapsam {

/// One synthetic map tile: RGB raster plus binary ground-truth mask.
struct Tile {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> raster;  // H*W*3, row-major RGB
  std::vector<std::uint8_t> gt;      // H*W, values in {0, 1}
  std::string feature_class;         // railway | vineyard | texture
  std::uint64_t seed = 0;
  std::string id;
};

// Procedural generators. Deterministic: (class, seed, size) -> identical
// bytes on any platform (integer-only rasterization).
Tile gen_railway(std::uint64_t seed, int size);
Tile gen_vineyard(std::uint64_t seed, int size);
// Unlabeled texture collage used by the reconstruction pretraining stage.
Tile gen_texture(std::uint64_t seed, int size);
Tile gen_tile(const std::string& feature_class, std::uint64_t seed, int size);

// ---- PPM (P6) / PGM (P5) IO, binary, maxval 255 ----
void write_ppm(const std::string& path, const std::uint8_t* rgb, int w, int h);
void write_pgm(const std::string& path, const std::uint8_t* gray, int w, int h);
std::vector<std::uint8_t> read_ppm(const std::string& path, int& w, int& h);
std::vector<std::uint8_t> read_pgm(const std::string& path, int& w, int& h);

struct ManifestEntry {
  std::string id;
  std::string feature_class;
  std::uint64_t seed = 0;
  std::string split;  // train | val | test
  std::string raster_path;  // relative to the manifest directory
  std::string mask_path;
};

struct Dataset {
  std::string root;  // directory holding the manifest
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> split(const std::string& name) const;
};

/// Generates counts.{train,val,test} tiles of one class, writes rasters,
/// masks and the manifest under out_dir, and returns the loaded dataset.
Dataset build_dataset(const std::string& feature_class, int train_count,
                      int val_count, int test_count, std::uint64_t root_seed,
                      int size, const std::string& out_dir);

void save_manifest(const Dataset& ds, const std::string& path);
Dataset load_manifest(const std::string& path);

// Train-split subsampling (val/test untouched). Drawn without replacement.
Dataset subsample_kshot(const Dataset& ds, int k, std::uint64_t seed);
Dataset subsample_fraction(const Dataset& ds, double fraction, std::uint64_t seed);

Tile load_tile(const Dataset& ds, const ManifestEntry& entry);

}  // namespace mapsam
