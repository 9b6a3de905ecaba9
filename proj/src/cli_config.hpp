#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "specmap/montecarlo.hpp"

namespace specmap::cli {

struct CenterSpec {
  enum class Kind { Map, Zero, Explicit };
  std::string label;
  Kind kind = Kind::Explicit;
  CoeffsXd coeffs;
};

struct SmallballConfig {
  std::vector<double> epsilons{0.5, 0.25, 0.125};
  long long samples = 1000000;
  CoeffsXd y;
  bool prior_only = false;
  std::vector<CenterSpec> centers;
};

struct DiagnoseConfig {
  std::vector<std::pair<std::string, CoeffsXd>> shifts;
  std::vector<Index> kakutani_grid;  ///< empty: derived from the truncation
  std::vector<Index> witness_n{1, 2, 4, 8, 16};
  double cond_threshold = 1e12;
};

struct AppConfig {
  ExperimentConfig exp;
  std::optional<SourceCondition> source;
  double map_check_tol = 1e-8;
  std::optional<SmallballConfig> smallball;
  std::optional<DiagnoseConfig> diagnose;
  std::string raw_bytes;  ///< config file contents, fingerprinted into manifests

  std::string basis_descr() const;
};

/// Parses and validates a JSON experiment config. Violated invariants are
/// reported as std::domain_error carrying the constraint name.
AppConfig load_config(const std::string& path);

}  // namespace specmap::cli
