#include "spoi/phantom.hpp"

#include <cmath>

#include "json.hpp"
#include "spoi/errors.hpp"
#include "spoi/parallel.hpp"
#include "spoi/rng.hpp"

namespace spoi {

void PhantomSpec::validate() const {
  if (rows < 1 || cols < 1) throw ConfigError("phantom grid must have positive dimensions");
  if (pixel_pitch_mm <= 0) throw ConfigError("pixel_pitch_mm must be positive");
  if (depth_offset_mm < 0) throw ConfigError("depth_offset_mm must be nonnegative");
  if (noise_std < 0) throw ConfigError("noise_std must be nonnegative");
  if (background_total_hemoglobin < 0) throw ConfigError("background hemoglobin must be >= 0");
  if (background_so2_percent < 0 || background_so2_percent > 100) {
    throw ConfigError("background so2 must lie in [0, 100]");
  }
  if (mus_prime.value_at_reference <= 0) throw ConfigError("mus' reference value must be > 0");
  if (mus_prime.reference_wavelength_nm <= 0) {
    throw ConfigError("mus' reference wavelength must be > 0");
  }

  const double width = static_cast<double>(cols - 1) * pixel_pitch_mm;
  const double height = static_cast<double>(rows - 1) * pixel_pitch_mm;
  for (std::size_t k = 0; k < inclusions.size(); ++k) {
    const Inclusion& inc = inclusions[k];
    const std::string label = "inclusion " + std::to_string(k);
    if (inc.radius_mm <= 0) throw ConfigError(label + ": radius must be positive");
    if (inc.so2_percent < 0 || inc.so2_percent > 100) {
      throw ConfigError(label + ": so2 must lie in [0, 100]");
    }
    if (inc.total_hemoglobin < 0) throw ConfigError(label + ": hemoglobin must be >= 0");
    if (inc.center_x_mm - inc.radius_mm < 0 || inc.center_x_mm + inc.radius_mm > width ||
        inc.center_y_mm - inc.radius_mm < 0 || inc.center_y_mm + inc.radius_mm > height) {
      throw InclusionOutOfBounds(label + " (radius " + std::to_string(inc.radius_mm) +
                                 " mm at " + std::to_string(inc.center_x_mm) + ", " +
                                 std::to_string(inc.center_y_mm) +
                                 " mm) extends outside the grid");
    }
  }
}

LabeledDataset generate(const PhantomSpec& spec, const WavelengthGrid& grid,
                        const SpectraMatrix& spectra) {
  spec.validate();
  if (spectra.wavelength_count() != grid.size()) {
    throw DimensionMismatch("phantom: spectra do not cover the wavelength grid");
  }
  if (spectra.chromophore_count() != 2) {
    throw WrongChromophoreCount("phantom labels need exactly HbO2 and HHb");
  }

  const Index I = spec.rows * spec.cols;
  const Index L = grid.size();

  RowVecd mus_row(L);
  for (Index l = 0; l < L; ++l) {
    mus_row[l] = spec.mus_prime.value_at_reference *
                 std::pow(grid[l] / spec.mus_prime.reference_wavelength_nm,
                          -spec.mus_prime.scattering_power);
  }

  LabeledDataset out;
  out.rows = spec.rows;
  out.cols = spec.cols;
  out.truth_conc.resize(I, 2);
  out.truth_fields.mu_a.resize(I, L);
  out.truth_fields.mu_s_prime.resize(I, L);
  out.vessel_mask.assign(static_cast<std::size_t>(I), 0);
  out.batch.depths.resize(I);

  parallel_for(static_cast<std::size_t>(I), [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const auto i = static_cast<Index>(p);
      const Index row = i / spec.cols;
      const Index col = i % spec.cols;
      const double x = static_cast<double>(col) * spec.pixel_pitch_mm;
      const double y = static_cast<double>(row) * spec.pixel_pitch_mm;

      double thb = spec.background_total_hemoglobin;
      double so2v = spec.background_so2_percent;
      for (const Inclusion& inc : spec.inclusions) {
        const double dx = x - inc.center_x_mm;
        const double dy = y - inc.center_y_mm;
        if (dx * dx + dy * dy <= inc.radius_mm * inc.radius_mm) {
          thb = inc.total_hemoglobin;
          so2v = inc.so2_percent;
          out.vessel_mask[p] = 1;
          break;
        }
      }

      out.truth_conc(i, 0) = thb * so2v / 100.0;
      out.truth_conc(i, 1) = thb * (1.0 - so2v / 100.0);
      out.truth_fields.mu_a.row(i) = out.truth_conc.row(i) * spectra.values.transpose();
      out.truth_fields.mu_s_prime.row(i) = mus_row;
      out.batch.depths[i] =
          spec.depth_offset_mm + static_cast<double>(row) * spec.pixel_pitch_mm;
    }
  });

  Matd clean = forward_pressure<double>(
      out.truth_fields, {RowVecd::Ones(L), out.batch.depths});
  const double clean_max = clean.maxCoeff();
  if (clean_max <= 0.0) throw ZeroDataMatrix("phantom generated an all-zero image");
  clean /= clean_max;

  if (spec.noise_std > 0.0) {
    parallel_for(static_cast<std::size_t>(I), [&](std::size_t begin, std::size_t end) {
      for (std::size_t p = begin; p < end; ++p) {
        const auto i = static_cast<Index>(p);
        for (Index l = 0; l < L; ++l) {
          const auto idx = static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(L) +
                           static_cast<std::uint64_t>(l);
          const double noisy = clean(i, l) + spec.noise_std * normal_at(spec.seed, idx);
          clean(i, l) = std::max(noisy, 0.0);
        }
      }
    });
    const double noisy_max = clean.maxCoeff();
    if (noisy_max <= 0.0) throw ZeroDataMatrix("phantom noise drowned the whole image");
    clean /= noisy_max;
  }

  out.batch.pixels = std::move(clean);
  out.truth_so2 = so2(out.truth_conc);
  return out;
}

PhantomSpec default_paper_phantom() {
  PhantomSpec spec;
  spec.rows = 128;
  spec.cols = 160;
  spec.pixel_pitch_mm = 0.1;
  spec.depth_offset_mm = 10.0;
  spec.noise_std = 0.01;
  spec.seed = 1;
  spec.background_total_hemoglobin = 0.01;
  spec.background_so2_percent = 75.0;
  spec.mus_prime = {1.0, 800.0, 1.2};
  // Vessels carry substantially more hemoglobin than perfused background
  // tissue; 5x keeps them visible against noise after normalization.
  const double vessel_thb = 0.05;
  spec.inclusions = {
      {4.0, 6.4, 1.5, 90.0, vessel_thb},
      {8.0, 6.4, 1.5, 70.0, vessel_thb},
      {12.0, 6.4, 1.5, 50.0, vessel_thb},
  };
  return spec;
}

namespace {

using nlohmann::ordered_json;

const nlohmann::json& require(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("phantom spec: missing field '") + key + "'");
  return j.at(key);
}

}  // namespace

std::string phantom_spec_to_json(const PhantomSpec& spec) {
  ordered_json j;
  j["grid_shape"] = {{"rows", spec.rows}, {"cols", spec.cols}};
  j["pixel_pitch_mm"] = spec.pixel_pitch_mm;
  j["inclusions"] = ordered_json::array();
  for (const Inclusion& inc : spec.inclusions) {
    j["inclusions"].push_back({{"center_mm", {inc.center_x_mm, inc.center_y_mm}},
                               {"radius_mm", inc.radius_mm},
                               {"so2_percent", inc.so2_percent},
                               {"total_hemoglobin", inc.total_hemoglobin}});
  }
  j["background"] = {{"total_hemoglobin", spec.background_total_hemoglobin},
                     {"so2_percent", spec.background_so2_percent}};
  j["mus_prime_profile"] = {{"value_at_reference", spec.mus_prime.value_at_reference},
                            {"reference_wavelength_nm", spec.mus_prime.reference_wavelength_nm},
                            {"scattering_power", spec.mus_prime.scattering_power}};
  j["depth_offset_mm"] = spec.depth_offset_mm;
  j["noise_std"] = spec.noise_std;
  j["seed"] = spec.seed;
  return j.dump(2) + "\n";
}

PhantomSpec phantom_spec_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("phantom spec: ") + e.what());
  }
  try {
    PhantomSpec spec;
    const auto shape = require(j, "grid_shape");
    spec.rows = shape.at("rows").get<Index>();
    spec.cols = shape.at("cols").get<Index>();
    spec.pixel_pitch_mm = require(j, "pixel_pitch_mm").get<double>();
    for (const auto& inc_json : require(j, "inclusions")) {
      Inclusion inc;
      const auto center = inc_json.at("center_mm");
      inc.center_x_mm = center.at(0).get<double>();
      inc.center_y_mm = center.at(1).get<double>();
      inc.radius_mm = inc_json.at("radius_mm").get<double>();
      inc.so2_percent = inc_json.at("so2_percent").get<double>();
      inc.total_hemoglobin = inc_json.at("total_hemoglobin").get<double>();
      spec.inclusions.push_back(inc);
    }
    const auto background = require(j, "background");
    spec.background_total_hemoglobin = background.at("total_hemoglobin").get<double>();
    spec.background_so2_percent = background.at("so2_percent").get<double>();
    const auto mus = require(j, "mus_prime_profile");
    spec.mus_prime.value_at_reference = mus.at("value_at_reference").get<double>();
    spec.mus_prime.reference_wavelength_nm = mus.at("reference_wavelength_nm").get<double>();
    spec.mus_prime.scattering_power = mus.at("scattering_power").get<double>();
    spec.depth_offset_mm = require(j, "depth_offset_mm").get<double>();
    spec.noise_std = require(j, "noise_std").get<double>();
    spec.seed = require(j, "seed").get<std::uint64_t>();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("phantom spec: ") + e.what());
  }
}

}  // namespace spoi
