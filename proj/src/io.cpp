#include "dnlab/io.hpp"

#include <fmt/format.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dnlab {

static_assert(std::endian::native == std::endian::little, "binary export assumes little-endian");

std::string format_number(double v) { return fmt::format("{:.17g}", v); }

void CsvTable::add_row(const std::vector<double>& row) {
  std::string line;
  for (size_t i = 0; i < row.size(); ++i) {
    if (i) line += ',';
    line += format_number(row[i]);
  }
  rows_.push_back(std::move(line));
}

void CsvTable::add_row(const std::vector<std::string>& row) {
  std::string line;
  for (size_t i = 0; i < row.size(); ++i) {
    if (i) line += ',';
    line += row[i];
  }
  rows_.push_back(std::move(line));
}

std::string CsvTable::str() const {
  std::string out;
  for (size_t i = 0; i < header_.size(); ++i) {
    if (i) out += ',';
    out += header_[i];
  }
  out += '\n';
  for (const auto& r : rows_) {
    out += r;
    out += '\n';
  }
  return out;
}

void CsvTable::write(const std::string& path) const { write_text(path, str()); }

void write_text(const std::string& path, const std::string& text) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot write " + path);
  f << text;
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_complex_binary(const std::string& path, const cplx* data, size_t count) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot write " + path);
  for (size_t i = 0; i < count; ++i) {
    double pair[2] = {data[i].real(), data[i].imag()};
    f.write(reinterpret_cast<const char*>(pair), sizeof pair);
  }
}

std::vector<cplx> read_complex_binary(const std::string& path) {
  std::string bytes = read_text(path);
  if (bytes.size() % 16 != 0) fail(ErrorKind::Io, "truncated complex binary " + path);
  std::vector<cplx> out(bytes.size() / 16);
  for (size_t i = 0; i < out.size(); ++i) {
    double pair[2];
    std::memcpy(pair, bytes.data() + 16 * i, 16);
    out[i] = cplx(pair[0], pair[1]);
  }
  return out;
}

}  // namespace dnlab
