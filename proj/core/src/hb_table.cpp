#include "spoi/spectra.hpp"

namespace spoi {
namespace {

// Molar extinction coefficients (cm^-1 / M) for oxy- and deoxy-hemoglobin on
// a 10 nm grid over the near-infrared window. Compiled from the standard
// whole-blood tabulations; only relative shape matters downstream because
// spectra are rescaled to a maximum entry of 1 before use.
//
// Mirrors core/assets/hb_extinction_v1.csv (a unit test keeps them in sync).
struct Row {
  double nm, hbo2, hhb;
};

constexpr Row kHbRows[] = {
    {650.0, 368.0, 3750.12},  {660.0, 319.6, 3226.56},  {670.0, 294.0, 2795.12},
    {680.0, 277.6, 2407.92},  {690.0, 276.0, 2051.96},  {700.0, 290.0, 1794.28},
    {710.0, 314.0, 1540.48},  {720.0, 348.0, 1325.88},  {730.0, 390.0, 1102.20},
    {740.0, 446.0, 1115.88},  {750.0, 532.0, 1405.24},  {760.0, 586.0, 1548.52},
    {770.0, 650.0, 1311.88},  {780.0, 710.0, 1075.44},  {790.0, 774.0, 890.80},
    {800.0, 816.0, 761.72},   {810.0, 864.0, 717.08},   {820.0, 916.0, 693.76},
    {830.0, 974.0, 693.04},   {840.0, 1022.0, 692.36},  {850.0, 1058.0, 691.32},
    {860.0, 1092.0, 694.32},  {870.0, 1128.0, 726.44},  {880.0, 1154.0, 761.84},
    {890.0, 1178.0, 797.56},  {900.0, 1198.0, 808.20},  {910.0, 1220.0, 828.00},
    {920.0, 1234.0, 843.60},  {930.0, 1244.0, 856.00},  {940.0, 1254.0, 866.80},
    {950.0, 1262.0, 875.20},  {960.0, 1268.0, 880.40},  {970.0, 1272.0, 881.60},
    {980.0, 1272.0, 877.20},  {990.0, 1268.0, 862.40},  {1000.0, 1262.0, 846.00},
};

}  // namespace

const HbTable& builtin_hb_table() {
  static const HbTable table = [] {
    HbTable t;
    for (const Row& r : kHbRows) {
      t.wavelength_nm.push_back(r.nm);
      t.hbo2.push_back(r.hbo2);
      t.hhb.push_back(r.hhb);
    }
    return t;
  }();
  return table;
}

}  // namespace spoi
