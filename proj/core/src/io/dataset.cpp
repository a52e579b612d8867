#include "spoi/io/dataset.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <sstream>

#include "spoi/errors.hpp"
#include "spoi/io/atomic_file.hpp"
#include "spoi/io/tensor_file.hpp"

namespace spoi {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'A', 'D'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

std::uint32_t get_u32(const std::string& buf, std::size_t& pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  }
  pos += 4;
  return v;
}

std::uint64_t get_u64(const std::string& buf, std::size_t& pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  }
  pos += 8;
  return v;
}

float get_f32(const std::string& buf, std::size_t& pos) {
  return std::bit_cast<float>(get_u32(buf, pos));
}

double parse_number(std::string_view token, const std::filesystem::path& path, std::size_t line) {
  double value = 0.0;
  const auto* begin = token.data();
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw IoError(path.string() + ":" + std::to_string(line) + ": bad number '" +
                  std::string(token) + "'");
  }
  return value;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const WavelengthGrid& grid,
                   const PixelBatch& batch) {
  batch.validate();
  if (batch.wavelength_count() != grid.size()) {
    throw DimensionMismatch("write_dataset: batch and grid wavelength counts differ");
  }
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, static_cast<std::uint64_t>(batch.pixel_count()));
  put_u64(out, static_cast<std::uint64_t>(batch.wavelength_count()));
  for (const double w : grid.values()) put_f32(out, static_cast<float>(w));
  for (Index i = 0; i < batch.pixel_count(); ++i) {
    put_f32(out, static_cast<float>(batch.depths[i]));
  }
  for (Index i = 0; i < batch.pixels.size(); ++i) {
    put_f32(out, static_cast<float>(batch.pixels.data()[i]));
  }
  atomic_write_file(path, out);
}

LoadedDataset load_dataset(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  if (buf.size() < 24 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw IoError(path.string() + ": not a dataset file (bad magic)");
  }
  std::size_t pos = 4;
  const std::uint32_t version = get_u32(buf, pos);
  if (version != kVersion) {
    throw IoError(path.string() + ": unsupported dataset version " + std::to_string(version));
  }
  const std::uint64_t pixel_count = get_u64(buf, pos);
  const std::uint64_t wavelength_count = get_u64(buf, pos);
  const std::uint64_t expected =
      pos + 4 * (wavelength_count + pixel_count + pixel_count * wavelength_count);
  if (buf.size() != expected) {
    throw IoError(path.string() + ": size does not match header (expected " +
                  std::to_string(expected) + " bytes, have " + std::to_string(buf.size()) + ")");
  }

  std::vector<double> wavelengths(wavelength_count);
  for (auto& w : wavelengths) w = get_f32(buf, pos);

  LoadedDataset out{WavelengthGrid(wavelengths), {}};
  const auto I = static_cast<Index>(pixel_count);
  const auto L = static_cast<Index>(wavelength_count);
  out.batch.depths.resize(I);
  for (Index i = 0; i < I; ++i) out.batch.depths[i] = get_f32(buf, pos);
  out.batch.pixels.resize(I, L);
  for (Index i = 0; i < out.batch.pixels.size(); ++i) {
    out.batch.pixels.data()[i] = get_f32(buf, pos);
  }
  out.batch.validate();

  const double max = out.batch.pixels.maxCoeff();
  if (max <= 0.0) throw ZeroDataMatrix(path.string() + ": dataset is identically zero");
  out.batch.pixels /= max;
  return out;
}

void write_truth(const std::filesystem::path& path, const PhantomSpec& spec,
                 const LabeledDataset& data) {
  TensorFile file;
  file.add_matrix("truth/conc", data.truth_conc);
  file.add_matrix("truth/mu_a", data.truth_fields.mu_a);
  file.add_matrix("truth/mu_s_prime", data.truth_fields.mu_s_prime);
  file.add_vector("truth/so2", data.truth_so2.values);
  const auto mask_len = static_cast<std::uint64_t>(data.vessel_mask.size());
  std::vector<float> mask(data.vessel_mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = data.vessel_mask[i] ? 1.0f : 0.0f;
  file.add("truth/vessel_mask", {mask_len}, std::move(mask));
  file.add("meta/grid_shape", {2},
           {static_cast<float>(data.rows), static_cast<float>(data.cols)});
  file.add_text("meta/spec_json", phantom_spec_to_json(spec));
  write_tensor_file(path, file);
}

TruthContent read_truth(const std::filesystem::path& path) {
  const TensorFile file = read_tensor_file(path);
  TruthContent out;
  out.conc = file.matrix("truth/conc");
  out.fields.mu_a = file.matrix("truth/mu_a");
  out.fields.mu_s_prime = file.matrix("truth/mu_s_prime");
  out.so2.values = file.vector("truth/so2");
  const Vecd mask = file.vector("truth/vessel_mask");
  out.vessel_mask.resize(static_cast<std::size_t>(mask.size()));
  for (Index i = 0; i < mask.size(); ++i) {
    out.vessel_mask[static_cast<std::size_t>(i)] = mask[i] != 0.0 ? 1 : 0;
  }
  const Vecd shape = file.vector("meta/grid_shape");
  if (shape.size() != 2) throw IoError(path.string() + ": malformed grid shape");
  out.rows = static_cast<Index>(shape[0]);
  out.cols = static_cast<Index>(shape[1]);
  out.spec_json = file.text("meta/spec_json");
  return out;
}

LoadedDataset import_csv(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  std::istringstream stream(buf);
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(stream, line)) throw IoError(path.string() + ": empty file");
  ++line_no;
  auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "depth_mm") {
    throw IoError(path.string() + ": header must be depth_mm followed by wavelengths");
  }
  std::vector<double> wavelengths;
  for (std::size_t k = 1; k < header.size(); ++k) {
    wavelengths.push_back(parse_number(header[k], path, line_no));
  }
  const WavelengthGrid grid(wavelengths);
  const auto L = static_cast<Index>(wavelengths.size());

  std::vector<double> depths;
  std::vector<double> values;
  while (std::getline(stream, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tokens = split_csv_line(line);
    if (static_cast<Index>(tokens.size()) != L + 1) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                    std::to_string(L + 1) + " fields, got " + std::to_string(tokens.size()));
    }
    depths.push_back(parse_number(tokens[0], path, line_no));
    for (Index l = 0; l < L; ++l) {
      values.push_back(parse_number(tokens[static_cast<std::size_t>(l + 1)], path, line_no));
    }
  }
  if (depths.empty()) throw IoError(path.string() + ": no pixel rows");

  LoadedDataset out{grid, {}};
  const auto I = static_cast<Index>(depths.size());
  out.batch.depths = Eigen::Map<const Vecd>(depths.data(), I);
  out.batch.pixels = Eigen::Map<const Matd>(values.data(), I, L);
  out.batch.validate();
  return out;
}

std::vector<std::uint8_t> load_mask(const std::filesystem::path& path, Index expected) {
  const std::string buf = read_file(path);
  std::istringstream stream(buf);
  std::string line;
  std::vector<std::uint8_t> mask;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line == "0") {
      mask.push_back(0);
    } else if (line == "1") {
      mask.push_back(1);
    } else {
      throw IoError(path.string() + ":" + std::to_string(line_no) +
                    ": mask lines must be 0 or 1");
    }
  }
  if (static_cast<Index>(mask.size()) != expected) {
    throw IoError(path.string() + ": mask has " + std::to_string(mask.size()) +
                  " entries, dataset has " + std::to_string(expected) + " pixels");
  }
  return mask;
}

}  // namespace spoi
