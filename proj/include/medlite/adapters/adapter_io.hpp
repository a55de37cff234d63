// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "medlite/adapters/lora.hpp"
#include "medlite/core/error.hpp"

namespace medlite {

// Text container, one adapter per file:
//
//   medlite-lora 1
//   <d> <r> <k> <alpha>
//   <d lines of r values: B row-major>
//   <r lines of k values: A row-major>
//
// Values are written with 17 significant digits so a save/load round trip
// reproduces every double bit for bit.
namespace detail {
inline std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(std::istream& in) {
  std::string token;
  if (!(in >> token)) throw FormatError("adapter file truncated");
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end != token.c_str() + token.size()) throw FormatError("adapter file: bad number '" + token + "'");
  return v;
}

inline void write_matrix_rows(std::ostream& out, const Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out << ' ';
      out << format_g17(m(r, c));
    }
    out << '\n';
  }
}
}  // namespace detail

inline void write_adapter(std::ostream& out, const LoraAdapter& adapter) {
  adapter.validate();
  out << "medlite-lora 1\n";
  out << adapter.out_dim() << ' ' << adapter.rank() << ' ' << adapter.in_dim() << ' '
      << detail::format_g17(adapter.alpha) << '\n';
  detail::write_matrix_rows(out, adapter.b);
  detail::write_matrix_rows(out, adapter.a);
}

inline LoraAdapter read_adapter(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "medlite-lora" || version != 1) {
    throw FormatError("not a medlite-lora v1 adapter file");
  }
  std::size_t d = 0, r = 0, k = 0;
  if (!(in >> d >> r >> k)) throw FormatError("adapter file: bad dimensions");
  if (d == 0 || r == 0 || k == 0 || d > (1u << 20) || k > (1u << 20) || r > (1u << 20)) {
    throw FormatError("adapter file: dimensions out of range");
  }
  LoraAdapter adapter{Matrix(d, r), Matrix(r, k), 0.0};
  adapter.alpha = detail::parse_double(in);
  for (double& v : adapter.b.data()) v = detail::parse_double(in);
  for (double& v : adapter.a.data()) v = detail::parse_double(in);
  adapter.validate();
  return adapter;
}

inline void save_adapter(const std::string& path, const LoraAdapter& adapter) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write adapter file '" + path + "'");
  write_adapter(out, adapter);
  if (!out) throw Error("failed writing adapter file '" + path + "'");
}

inline LoraAdapter load_adapter(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open adapter file '" + path + "'");
  return read_adapter(in);
}

}  // namespace medlite
