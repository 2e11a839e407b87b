#include "mcvit/tensor.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mcvit {

std::size_t element_count(const std::vector<std::int64_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)), data_(element_count(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size())
    throw ShapeError("tensor data length does not match shape");
}

Tensor Tensor::from_matrix(const Matrix& m) {
  std::vector<double> data(m.data(), m.data() + m.size());
  return Tensor({m.rows(), m.cols()}, std::move(data));
}

Matrix Tensor::to_matrix() const {
  if (rank() != 2) throw ShapeError("expected a rank-2 tensor, got rank " + std::to_string(rank()));
  Matrix m(shape_[0], shape_[1]);
  std::memcpy(m.data(), data_.data(), data_.size() * sizeof(double));
  return m;
}

namespace {

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out << "MCVT1 f64 " << t.rank();
  for (auto d : t.shape()) out << ' ' << d;
  out << '\n';
  for (double x : t.data()) {
    auto bits = to_little_endian(std::bit_cast<std::uint64_t>(x));
    out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
  }
  if (!out) throw IoError("failed writing tensor payload");
}

Tensor read_tensor(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw IoError("missing tensor header");
  std::istringstream hs(header);
  std::string magic, dtype;
  std::size_t rank = 0;
  if (!(hs >> magic >> dtype >> rank) || magic != "MCVT1")
    throw IoError("bad tensor header: '" + header + "'");
  if (dtype != "f64" && dtype != "dtype=f64") throw IoError("unsupported dtype " + dtype);
  std::vector<std::int64_t> shape(rank);
  for (auto& d : shape)
    if (!(hs >> d) || d <= 0) throw IoError("bad tensor dimension in header");
  std::vector<double> data(element_count(shape));
  for (double& x : data) {
    std::uint64_t bits = 0;
    if (!in.read(reinterpret_cast<char*>(&bits), sizeof(bits))) throw IoError("truncated tensor payload");
    x = std::bit_cast<double>(to_little_endian(bits));
  }
  return Tensor(std::move(shape), std::move(data));
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw IoError("failed writing " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot rename into " + path.string() + ": " + ec.message());
  }
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ostringstream buf(std::ios::binary);
  write_tensor(buf, t);
  write_file_atomic(path, buf.str());
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace mcvit
