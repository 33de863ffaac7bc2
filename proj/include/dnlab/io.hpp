#pragma once

#include <string>
#include <vector>

#include "dnlab/common.hpp"

namespace dnlab {

/// Deterministic CSV table; numbers are printed with 17 significant digits.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(const std::vector<double>& row);
  void add_row(const std::vector<std::string>& row);
  size_t rows() const { return rows_.size(); }
  std::string str() const;
  void write(const std::string& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::string> rows_;
};

std::string format_number(double v);

/// little-endian (re, im) float64 pairs
void write_complex_binary(const std::string& path, const cplx* data, size_t count);
std::vector<cplx> read_complex_binary(const std::string& path);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace dnlab
