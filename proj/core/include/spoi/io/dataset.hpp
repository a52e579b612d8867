#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "spoi/phantom.hpp"
#include "spoi/pixel_batch.hpp"
#include "spoi/wavelength_grid.hpp"

namespace spoi {

struct LoadedDataset {
  WavelengthGrid grid;
  PixelBatch batch;
};

/// SPAD format: magic `SPAD`, version u32=1, I u64, L u64, then float32
/// wavelengths[L] (nm), depths[I] (mm), pixels[I*L] row-major, little-endian.
void write_dataset(const std::filesystem::path& path, const WavelengthGrid& grid,
                   const PixelBatch& batch);

/// Reads and validates a SPAD file, then normalizes pixels to a global max
/// of 1 (idempotent for files that are already normalized).
LoadedDataset load_dataset(const std::filesystem::path& path);

/// Truth companion for generated phantoms, stored as a tensor file.
void write_truth(const std::filesystem::path& path, const PhantomSpec& spec,
                 const LabeledDataset& data);

struct TruthContent {
  ConcentrationMatrix conc;
  OpticalFields fields;
  So2Map so2;
  std::vector<std::uint8_t> vessel_mask;
  Index rows = 0;
  Index cols = 0;
  std::string spec_json;
};

TruthContent read_truth(const std::filesystem::path& path);

/// CSV import: header `depth_mm,<nm>,<nm>,...`, then one `depth,p_1..p_L`
/// row per pixel.
LoadedDataset import_csv(const std::filesystem::path& path);

/// One `0` or `1` per line, exactly `expected` lines.
std::vector<std::uint8_t> load_mask(const std::filesystem::path& path, Index expected);

}  // namespace spoi
