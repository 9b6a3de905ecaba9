#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specmap/spectral.hpp"

namespace specmap::cli {

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v);

/// FNV-1a 64-bit hash, hex encoded; used to fingerprint config files.
std::string fnv1a_hex(const std::string& bytes);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& body);

/// Coefficient vector file: '#' header comment carrying the truncation and
/// basis law, then one decimal per line.
void write_coeffs(const std::string& path, const CoeffsXd& x, const std::string& law_descr);
CoeffsXd read_coeffs(const std::string& path);

/// One CSV row from preformatted cells.
std::string csv_row(const std::vector<std::string>& cells);

struct Manifest {
  std::string subcommand;
  std::string config_path;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
};

/// Writes <first output>.manifest.json; the manifest is the only artifact
/// carrying wall-clock timestamps.
void write_manifest(const Manifest& m);

}  // namespace specmap::cli
