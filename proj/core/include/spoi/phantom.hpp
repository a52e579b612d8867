#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spoi/forward.hpp"
#include "spoi/metrics.hpp"
#include "spoi/pixel_batch.hpp"
#include "spoi/spectra.hpp"
#include "spoi/types.hpp"
#include "spoi/wavelength_grid.hpp"

namespace spoi {

/// Circular blood inclusion. center_mm is (lateral, axial) within the grid;
/// the axial coordinate is measured from the top grid row, which itself sits
/// depth_offset_mm below the surface.
struct Inclusion {
  double center_x_mm = 0.0;
  double center_y_mm = 0.0;
  double radius_mm = 0.0;
  double so2_percent = 0.0;
  double total_hemoglobin = 0.0;
};

/// Power-law reduced scattering: mus'(lambda) = value * (lambda/ref)^(-power).
struct MusPrimeProfile {
  double value_at_reference = 1.0;  // mm^-1
  double reference_wavelength_nm = 800.0;
  double scattering_power = 1.2;
};

struct PhantomSpec {
  Index rows = 0;
  Index cols = 0;
  double pixel_pitch_mm = 0.1;
  std::vector<Inclusion> inclusions;
  double background_total_hemoglobin = 0.0;
  double background_so2_percent = 0.0;
  MusPrimeProfile mus_prime;
  double depth_offset_mm = 0.0;
  double noise_std = 0.0;
  std::uint64_t seed = 1;

  /// Throws ConfigError or InclusionOutOfBounds (naming the inclusion index).
  void validate() const;
};

struct LabeledDataset {
  PixelBatch batch;  // normalized pixels + depths
  ConcentrationMatrix truth_conc;
  OpticalFields truth_fields;  // generator units, before normalization
  So2Map truth_so2;
  std::vector<std::uint8_t> vessel_mask;
  Index rows = 0;
  Index cols = 0;
};

/// Forward-models the spec into labeled pixel spectra: per pixel
/// c = THb [so2/100, 1-so2/100], mu_a = E c, power-law mus', then pressure
/// exp(-mu_eff rho) mu_a at unit Gruneisen-fluence. The clean image is
/// normalized to max 1, Gaussian noise of width noise_std is added, negatives
/// are clamped, and the result is renormalized.
LabeledDataset generate(const PhantomSpec& spec, const WavelengthGrid& grid,
                        const SpectraMatrix& spectra);

/// Three disks 10 mm deep at SO2 {90, 70, 50}%, hypoxic-to-hyperoxic span,
/// over a dim 75% background; 128 x 160 grid at 0.1 mm pitch.
PhantomSpec default_paper_phantom();

std::string phantom_spec_to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(const std::string& text);

}  // namespace spoi
