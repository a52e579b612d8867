#include "spoi/spectra.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <utility>

#include "spoi/errors.hpp"
#include "spoi/io/atomic_file.hpp"

namespace spoi {

namespace {

constexpr double kSvdRelativeCutoff = 1e-12;

double interp_column(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  // xs strictly increasing; x within [xs.front(), xs.back()] checked by caller
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  if (it == xs.begin()) return ys.front();
  if (it == xs.end()) return ys.back();
  const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
  const std::size_t lo = hi - 1;
  const double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return ys[lo] + t * (ys[hi] - ys[lo]);
}

double parse_number(const std::string& token, const std::string& context) {
  double v = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw IoError("bad numeric field '" + token + "' in " + context);
  }
  return v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

SpectraMatrix SpectraMatrix::with_values(Matd new_values) const {
  SpectraMatrix out;
  out.values = std::move(new_values);
  out.names = names;
  out.pinv_stale = true;
  return out;
}

SpectraMatrix spectra_from_table(const HbTable& table, const WavelengthGrid& grid,
                                 const std::vector<std::string>& chromophores) {
  if (chromophores.empty()) throw UnknownChromophore("no chromophores requested");
  if (table.wavelength_nm.size() < 2) throw IoError("spectra table needs at least two rows");
  if (grid.min_nm() < table.wavelength_nm.front() || grid.max_nm() > table.wavelength_nm.back()) {
    std::ostringstream msg;
    msg << "grid [" << grid.min_nm() << ", " << grid.max_nm() << "] nm outside tabulated range ["
        << table.wavelength_nm.front() << ", " << table.wavelength_nm.back() << "] nm";
    throw GridOutOfTabulatedRange(msg.str());
  }

  const Index L = grid.size();
  const Index N = static_cast<Index>(chromophores.size());
  Matd values(L, N);
  for (Index n = 0; n < N; ++n) {
    const std::string& name = chromophores[static_cast<std::size_t>(n)];
    const std::vector<double>* column = nullptr;
    if (name == "HbO2") {
      column = &table.hbo2;
    } else if (name == "HHb") {
      column = &table.hhb;
    } else {
      throw UnknownChromophore("unknown chromophore '" + name + "'");
    }
    for (Index l = 0; l < L; ++l) {
      values(l, n) = interp_column(table.wavelength_nm, *column, grid[l]);
    }
  }

  // relative spectra: rescale so the maximum entry is 1
  const double max_entry = values.maxCoeff();
  if (!(max_entry > 0.0)) throw IoError("spectra table has no positive entries on this grid");
  values /= max_entry;

  SpectraMatrix out;
  out.values = std::move(values);
  out.names = chromophores;
  out.pinv_stale = true;
  return compute_pinv(std::move(out));
}

SpectraMatrix literature_spectra(const WavelengthGrid& grid,
                                 const std::vector<std::string>& chromophores) {
  return spectra_from_table(builtin_hb_table(), grid, chromophores);
}

SpectraMatrix compute_pinv(SpectraMatrix spectra) {
  const Matd& E = spectra.values;
  if (E.rows() < E.cols()) {
    throw RankDeficientSpectra("more chromophores than wavelengths");
  }
  Eigen::JacobiSVD<Matd> svd(E, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = kSvdRelativeCutoff * sv(0);
  if (!(sv(sv.size() - 1) > cutoff)) {
    std::ostringstream msg;
    msg << "spectra not full column rank: sigma_min=" << sv(sv.size() - 1)
        << " <= " << cutoff;
    throw RankDeficientSpectra(msg.str());
  }
  Vecd inv_sv = sv.cwiseInverse();
  spectra.pinv = svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
  spectra.pinv_stale = false;
  return spectra;
}

ConcentrationMatrix unmix(const SpectraMatrix& spectra, const Matd& mu_a) {
  if (spectra.pinv_stale) throw StalePseudoinverse("call compute_pinv before unmix");
  if (mu_a.cols() != spectra.wavelength_count()) {
    std::ostringstream msg;
    msg << "mu_a has " << mu_a.cols() << " columns, spectra expect "
        << spectra.wavelength_count();
    throw DimensionMismatch(msg.str());
  }
  return (mu_a * spectra.pinv.transpose()).cwiseMax(0.0);
}

Matd reconstruct_mu_a(const SpectraMatrix& spectra, const ConcentrationMatrix& conc) {
  if (conc.cols() != spectra.chromophore_count()) {
    std::ostringstream msg;
    msg << "conc has " << conc.cols() << " columns, spectra expect "
        << spectra.chromophore_count();
    throw DimensionMismatch(msg.str());
  }
  return (conc * spectra.values.transpose()).cwiseMax(0.0);
}

HbTable load_hb_csv(const std::string& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("wavelength_nm,hbo2,hhb", 0) != 0) {
    throw IoError("spectra CSV must start with header 'wavelength_nm,hbo2,hhb': " + path);
  }
  HbTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string a, b, c;
    if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, c)) {
      throw IoError("line " + std::to_string(line_no) + ": expected 3 fields in " + path);
    }
    const std::string ctx = path + ":" + std::to_string(line_no);
    table.wavelength_nm.push_back(parse_number(a, ctx));
    table.hbo2.push_back(parse_number(b, ctx));
    table.hhb.push_back(parse_number(c, ctx));
  }
  for (std::size_t i = 1; i < table.wavelength_nm.size(); ++i) {
    if (!(table.wavelength_nm[i] > table.wavelength_nm[i - 1])) {
      throw IoError("spectra CSV wavelengths must be strictly increasing: " + path);
    }
  }
  if (table.wavelength_nm.size() < 2) throw IoError("spectra CSV too short: " + path);
  return table;
}

void save_spectra_csv(const std::string& path, const WavelengthGrid& grid,
                      const SpectraMatrix& spectra) {
  if (spectra.chromophore_count() != 2 || spectra.names.size() != 2 ||
      spectra.names[0] != "HbO2" || spectra.names[1] != "HHb") {
    throw ConfigError("spectra CSV export requires columns [HbO2, HHb]");
  }
  if (spectra.wavelength_count() != grid.size()) {
    throw DimensionMismatch("spectra rows do not match grid length");
  }
  std::string out = "wavelength_nm,hbo2,hhb\n";
  for (Index l = 0; l < grid.size(); ++l) {
    out += format_double(grid[l]);
    out += ',';
    out += format_double(spectra.values(l, 0));
    out += ',';
    out += format_double(spectra.values(l, 1));
    out += '\n';
  }
  atomic_write_file(path, out);
}

}  // namespace spoi
