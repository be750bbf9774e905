#include "tica/matrix_io.hpp"

#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace tica::io {

namespace {

constexpr std::array<char, 4> kMagic = {'T', 'I', 'C', 'A'};
constexpr std::uint8_t kVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<unsigned char, 8> b;
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = (v >> (8 * i)) & 0xff;
  out.write(reinterpret_cast<const char*>(b.data()), 8);
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> b;
  in.read(reinterpret_cast<char*>(b.data()), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[static_cast<std::size_t>(i)]} << (8 * i);
  return v;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void write_matrix_bin(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kMagic.data(), 4);
  const std::array<char, 4> header_tail = {static_cast<char>(kVersion), 0, 0, 0};
  out.write(header_tail.data(), 4);
  put_u64(out, static_cast<std::uint64_t>(m.rows()));
  put_u64(out, static_cast<std::uint64_t>(m.cols()));
  // Payload is row-major; the in-memory layout is column-major.
  std::vector<double> row(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      row[static_cast<std::size_t>(c)] = m(r, c);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed: " + path);
}

Matrix read_matrix_bin(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::array<char, 4> magic;
  in.read(magic.data(), 4);
  if (!in || magic != kMagic) throw FormatError("bad magic: " + path);
  std::array<char, 4> header_tail;
  in.read(header_tail.data(), 4);
  if (!in || static_cast<std::uint8_t>(header_tail[0]) != kVersion)
    throw FormatError("unsupported version: " + path);
  const std::uint64_t rows = get_u64(in);
  const std::uint64_t cols = get_u64(in);
  if (!in) throw FormatError("truncated header: " + path);
  if (rows > (1ULL << 32) || cols > (1ULL << 32))
    throw FormatError("implausible dimensions: " + path);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::vector<double> row(static_cast<std::size_t>(cols));
  for (std::uint64_t r = 0; r < rows; ++r) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(double)));
    if (!in) throw FormatError("payload shorter than header claims: " + path);
    for (std::uint64_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          row[static_cast<std::size_t>(c)];
  }
  char extra;
  if (in.read(&extra, 1))
    throw FormatError("payload longer than header claims: " + path);
  return m;
}

void write_matrix_csv(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  char buf[40];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const int n = std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      out.write(buf, n);
      if (c + 1 < m.cols()) out.put(',');
    }
    out.put('\n');
  }
  if (!out) throw IoError("write failed: " + path);
}

Matrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    std::vector<double> row;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      const std::string cell =
          line.substr(pos, comma == std::string::npos ? comma : comma - pos);
      double value = 0.0;
      const char* first = cell.data();
      const char* last = cell.data() + cell.size();
      const auto res = std::from_chars(first, last, value);
      if (res.ec != std::errc{} || res.ptr != last)
        throw FormatError("non-numeric cell '" + cell + "' in " + path);
      row.push_back(value);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw FormatError("ragged rows in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("empty csv: " + path);
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows.front().size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

void write_matrix(const std::string& path, const Matrix& m) {
  if (ends_with(path, ".csv")) {
    write_matrix_csv(path, m);
  } else if (ends_with(path, ".bin")) {
    write_matrix_bin(path, m);
  } else {
    throw FormatError("unknown matrix extension: " + path);
  }
}

Matrix read_matrix(const std::string& path) {
  if (ends_with(path, ".csv")) return read_matrix_csv(path);
  if (ends_with(path, ".bin")) return read_matrix_bin(path);
  throw FormatError("unknown matrix extension: " + path);
}

}  // namespace tica::io
