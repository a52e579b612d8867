#pragma once

#include <stdexcept>
#include <string>

namespace spoi {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Input shapes do not agree with each other or with the active grid.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Requested chromophore is not present in the spectra asset.
class UnknownChromophore : public Error {
 public:
  using Error::Error;
};

/// Wavelength grid extends past the tabulated range of the asset.
class GridOutOfTabulatedRange : public Error {
 public:
  using Error::Error;
};

/// Spectra matrix lost full column rank (singular value below cutoff).
class RankDeficientSpectra : public Error {
 public:
  using Error::Error;
};

/// Pseudoinverse was not recomputed after the spectra changed.
class StalePseudoinverse : public Error {
 public:
  using Error::Error;
};

/// Batch-norm training statistics need at least two rows.
class BatchTooSmall : public Error {
 public:
  using Error::Error;
};

/// Gradient contained a NaN or infinity.
class NonFiniteGradient : public Error {
 public:
  using Error::Error;
};

/// Training loss became NaN or infinite; message identifies epoch/batch.
class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

/// NMF input matrix is identically zero.
class ZeroDataMatrix : public Error {
 public:
  using Error::Error;
};

class EmptyBatch : public Error {
 public:
  using Error::Error;
};

class EmptyMask : public Error {
 public:
  using Error::Error;
};

/// SO2 requires exactly the [HbO2, HHb] column pair.
class WrongChromophoreCount : public Error {
 public:
  using Error::Error;
};

/// Phantom inclusion center lies outside the pixel grid.
class InclusionOutOfBounds : public Error {
 public:
  using Error::Error;
};

/// File could not be read, written, or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Configuration value violates its contract.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace spoi
