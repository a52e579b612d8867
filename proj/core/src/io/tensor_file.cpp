#include "spoi/io/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <limits>

#include "spoi/errors.hpp"
#include "spoi/io/atomic_file.hpp"

namespace spoi {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'O', 'I'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class Reader {
 public:
  Reader(const std::string& buf, std::size_t start, const std::filesystem::path& path)
      : buf_(buf), path_(path), pos_(start) {}

  bool eof() const { return pos_ == buf_.size(); }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  std::string bytes(std::uint64_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::vector<float> floats(std::uint64_t n) {
    need(n * 4);
    std::vector<float> v(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + 4 * i + b]))
                << (8 * b);
      }
      v[i] = std::bit_cast<float>(bits);
    }
    pos_ += n * 4;
    return v;
  }

 private:
  void need(std::uint64_t n) const {
    if (buf_.size() - pos_ < n) {
      throw IoError(path_.string() + ": truncated tensor file");
    }
  }

  const std::string& buf_;
  std::filesystem::path path_;
  std::size_t pos_;
};

}  // namespace

std::uint64_t TensorRecord::element_count() const {
  std::uint64_t n = 1;
  for (const std::uint64_t d : dims) n *= d;
  return n;
}

const TensorRecord* TensorFile::find(std::string_view name) const {
  for (const TensorRecord& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

const TensorRecord& TensorFile::require(std::string_view name) const {
  const TensorRecord* r = find(name);
  if (r == nullptr) throw IoError("tensor file is missing record '" + std::string(name) + "'");
  return *r;
}

void TensorFile::add(std::string name, std::vector<std::uint64_t> dims, std::vector<float> data) {
  std::uint64_t n = 1;
  for (const std::uint64_t d : dims) n *= d;
  if (n != data.size()) {
    throw IoError("record '" + name + "': dims do not match payload size");
  }
  records.push_back({std::move(name), std::move(dims), std::move(data)});
}

void TensorFile::add_matrix(std::string name, const Matd& m) {
  std::vector<float> data(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.size(); ++i) {
    data[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);  // row-major storage
  }
  add(std::move(name),
      {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
      std::move(data));
}

void TensorFile::add_vector(std::string name, const Vecd& v) {
  std::vector<float> data(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) data[static_cast<std::size_t>(i)] = static_cast<float>(v[i]);
  add(std::move(name), {static_cast<std::uint64_t>(v.size())}, std::move(data));
}

void TensorFile::add_row(std::string name, const RowVecd& v) {
  std::vector<float> data(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) data[static_cast<std::size_t>(i)] = static_cast<float>(v[i]);
  add(std::move(name), {static_cast<std::uint64_t>(v.size())}, std::move(data));
}

void TensorFile::add_text(std::string name, std::string_view text) {
  std::vector<float> data(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    data[i] = static_cast<float>(static_cast<unsigned char>(text[i]));
  }
  add(std::move(name), {static_cast<std::uint64_t>(text.size())}, std::move(data));
}

Matd TensorFile::matrix(std::string_view name) const {
  const TensorRecord& r = require(name);
  if (r.dims.size() != 2) {
    throw IoError("record '" + std::string(name) + "' is not a rank-2 tensor");
  }
  Matd m(static_cast<Index>(r.dims[0]), static_cast<Index>(r.dims[1]));
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = r.data[static_cast<std::size_t>(i)];
  return m;
}

Vecd TensorFile::vector(std::string_view name) const {
  const TensorRecord& r = require(name);
  if (r.dims.size() != 1) {
    throw IoError("record '" + std::string(name) + "' is not a rank-1 tensor");
  }
  Vecd v(static_cast<Index>(r.dims[0]));
  for (Index i = 0; i < v.size(); ++i) v[i] = r.data[static_cast<std::size_t>(i)];
  return v;
}

RowVecd TensorFile::row(std::string_view name) const {
  return vector(name).transpose();
}

std::string TensorFile::text(std::string_view name) const {
  const TensorRecord& r = require(name);
  std::string s(r.data.size(), '\0');
  for (std::size_t i = 0; i < r.data.size(); ++i) s[i] = static_cast<char>(r.data[i]);
  return s;
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, file.version);
  for (const TensorRecord& r : file.records) {
    if (r.name.size() > std::numeric_limits<std::uint32_t>::max()) {
      throw IoError("record name too long");
    }
    if (r.element_count() != r.data.size()) {
      throw IoError("record '" + r.name + "': dims do not match payload size");
    }
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.append(r.name);
    put_u32(out, static_cast<std::uint32_t>(r.dims.size()));
    for (const std::uint64_t d : r.dims) put_u64(out, d);
    for (const float v : r.data) put_f32(out, v);
  }
  atomic_write_file(path, out);
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  if (buf.size() < 8 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw IoError(path.string() + ": not a tensor file (bad magic)");
  }
  Reader reader(buf, 4, path);  // past the magic
  TensorFile file;
  file.version = reader.u32();
  if (file.version != 1) {
    throw IoError(path.string() + ": unsupported tensor file version " +
                  std::to_string(file.version));
  }
  while (!reader.eof()) {
    TensorRecord r;
    const std::uint32_t name_len = reader.u32();
    r.name = reader.bytes(name_len);
    const std::uint32_t rank = reader.u32();
    r.dims.resize(rank);
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      r.dims[i] = reader.u64();
      count *= r.dims[i];
    }
    r.data = reader.floats(count);
    file.records.push_back(std::move(r));
  }
  return file;
}

}  // namespace spoi
