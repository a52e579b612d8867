#include "spoi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "json.hpp"
#include "spoi/errors.hpp"
#include "spoi/io/atomic_file.hpp"

namespace spoi {

namespace {

void check_same_shape(const Matd& input, const Matd& recon, const char* who) {
  if (input.rows() != recon.rows() || input.cols() != recon.cols()) {
    throw DimensionMismatch(std::string(who) + ": input is " + std::to_string(input.rows()) +
                            "x" + std::to_string(input.cols()) + ", reconstruction is " +
                            std::to_string(recon.rows()) + "x" + std::to_string(recon.cols()));
  }
  if (input.rows() == 0) throw EmptyBatch(std::string(who) + ": no pixels");
}

std::string format_g(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

double mse(const Matd& input, const Matd& recon) {
  check_same_shape(input, recon, "mse");
  return (input - recon).rowwise().squaredNorm().mean();
}

double sad(const RowVecd& p, const RowVecd& p_hat) {
  const double denom = p.norm() * p_hat.norm() + kSadEpsilon;
  const double cosine = std::clamp(p.dot(p_hat) / denom, -1.0, 1.0);
  return (2.0 / std::numbers::pi) * std::acos(cosine);
}

double msad(const Matd& input, const Matd& recon) {
  check_same_shape(input, recon, "msad");
  double total = 0.0;
  for (Index i = 0; i < input.rows(); ++i) total += sad(input.row(i), recon.row(i));
  return total / static_cast<double>(input.rows());
}

Vecd r2_per_wavelength(const Matd& input, const Matd& recon) {
  check_same_shape(input, recon, "r2_per_wavelength");
  const RowVecd mean = input.colwise().mean();
  Vecd r2(input.cols());
  for (Index l = 0; l < input.cols(); ++l) {
    const double ss_tot = (input.col(l).array() - mean[l]).square().sum();
    if (ss_tot <= 0.0) {
      r2[l] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double ss_res = (input.col(l) - recon.col(l)).squaredNorm();
    r2[l] = 1.0 - ss_res / ss_tot;
  }
  return r2;
}

Vecd average_spectrum(const Matd& pixels) {
  if (pixels.rows() == 0) throw EmptyBatch("average_spectrum: no pixels");
  return pixels.colwise().mean().transpose();
}

So2Map so2(const ConcentrationMatrix& conc) {
  if (conc.cols() != 2) {
    throw WrongChromophoreCount("so2 needs exactly HbO2 and HHb columns, got " +
                                std::to_string(conc.cols()));
  }
  So2Map map;
  map.values.resize(conc.rows());
  for (Index i = 0; i < conc.rows(); ++i) {
    const double total = conc(i, 0) + conc(i, 1);
    map.values[i] = total > 0.0 ? 100.0 * conc(i, 0) / total
                                : std::numeric_limits<double>::quiet_NaN();
  }
  return map;
}

double so2_mae(const So2Map& estimate, const So2Map& truth,
               const std::vector<std::uint8_t>& mask) {
  if (estimate.pixel_count() != truth.pixel_count() ||
      static_cast<std::size_t>(estimate.pixel_count()) != mask.size()) {
    throw DimensionMismatch("so2_mae: map and mask sizes differ");
  }
  double total = 0.0;
  Index count = 0;
  for (Index i = 0; i < estimate.pixel_count(); ++i) {
    if (!mask[static_cast<std::size_t>(i)] || !estimate.defined(i) || !truth.defined(i)) continue;
    total += std::abs(estimate.values[i] - truth.values[i]);
    ++count;
  }
  if (count == 0) throw EmptyMask("so2_mae: mask selects no pixel with defined SO2");
  return total / static_cast<double>(count);
}

EvalReport evaluate(const PixelBatch& input, const Matd& recon) {
  check_same_shape(input.pixels, recon, "evaluate");
  EvalReport report;
  report.mse = mse(input.pixels, recon);
  report.msad = msad(input.pixels, recon);
  report.r2_per_wavelength = r2_per_wavelength(input.pixels, recon);
  report.avg_spectrum_input = average_spectrum(input.pixels);
  report.avg_spectrum_recon = average_spectrum(recon);

  double sum = 0.0, sum_sq = 0.0;
  Index defined = 0;
  for (Index l = 0; l < report.r2_per_wavelength.size(); ++l) {
    const double v = report.r2_per_wavelength[l];
    if (std::isnan(v)) continue;
    sum += v;
    sum_sq += v * v;
    ++defined;
  }
  if (defined > 0) {
    report.r2_mean = sum / static_cast<double>(defined);
    const double var = sum_sq / static_cast<double>(defined) - report.r2_mean * report.r2_mean;
    report.r2_std = std::sqrt(std::max(var, 0.0));
  } else {
    report.r2_mean = std::numeric_limits<double>::quiet_NaN();
    report.r2_std = std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["mse"] = report.mse;
  j["msad"] = report.msad;
  j["r2_mean"] = report.r2_mean;
  j["r2_std"] = report.r2_std;
  auto vec = [](const Vecd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  j["r2_per_wavelength"] = vec(report.r2_per_wavelength);  // NaN serializes as null
  j["avg_spectrum_input"] = vec(report.avg_spectrum_input);
  j["avg_spectrum_recon"] = vec(report.avg_spectrum_recon);
  return j.dump(2) + "\n";
}

void write_report_csv(const std::filesystem::path& path, const WavelengthGrid& grid,
                      const EvalReport& report) {
  if (grid.size() != report.r2_per_wavelength.size()) {
    throw DimensionMismatch("write_report_csv: grid and report wavelength counts differ");
  }
  std::string out = "wavelength_nm,r2,avg_input,avg_recon\n";
  for (Index l = 0; l < grid.size(); ++l) {
    out += format_g(grid[l]) + "," + format_g(report.r2_per_wavelength[l]) + "," +
           format_g(report.avg_spectrum_input[l]) + "," +
           format_g(report.avg_spectrum_recon[l]) + "\n";
  }
  atomic_write_file(path, out);
}

}  // namespace spoi
