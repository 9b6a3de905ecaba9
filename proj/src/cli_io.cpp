#include "cli_io.hpp"

#include <json.hpp>

#include <charconv>
#include <chrono>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "specmap/rng.hpp"
#include "specmap/version.hpp"

namespace specmap::cli {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << body;
}

void write_coeffs(const std::string& path, const CoeffsXd& x, const std::string& law_descr) {
  std::ostringstream ss;
  ss << "# coeffvec n=" << x.size() << " law=" << law_descr << "\n";
  for (Index i = 0; i < x.size(); ++i) ss << format_double(x[i]) << "\n";
  write_file(path, ss.str());
}

CoeffsXd read_coeffs(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<double> vals;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    double v = 0.0;
    const auto res = std::from_chars(line.data(), line.data() + line.size(), v);
    if (res.ec != std::errc())
      throw std::runtime_error("coeffvec file " + path + ": cannot parse line '" + line + "'");
    vals.push_back(v);
  }
  CoeffsXd x(static_cast<Index>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) x[static_cast<Index>(i)] = vals[i];
  return x;
}

std::string csv_row(const std::vector<std::string>& cells) {
  std::string row;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) row += ',';
    row += cells[i];
  }
  row += '\n';
  return row;
}

void write_manifest(const Manifest& m) {
  nlohmann::json j;
  j["subcommand"] = m.subcommand;
  j["config_path"] = m.config_path;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["rng"] = Philox4x32::kName;
  j["versions"] = {{"specmap", SPECMAP_VERSION},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                 std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)}};
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  j["timestamp_unix_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
  j["outputs"] = m.outputs;
  write_file(m.outputs.empty() ? m.subcommand + ".manifest.json"
                               : m.outputs.front() + ".manifest.json",
             j.dump(2) + "\n");
}

}  // namespace specmap::cli
