#include "cli_config.hpp"

#include <json.hpp>

#include <sstream>
#include <stdexcept>

#include "cli_io.hpp"

namespace specmap::cli {

using nlohmann::json;

namespace {

CoeffsXd to_coeffs(const json& arr, const char* where) {
  if (!arr.is_array()) throw std::domain_error(std::string(where) + " must be an array");
  CoeffsXd x(static_cast<Index>(arr.size()));
  Index i = 0;
  for (const auto& v : arr) {
    if (!v.is_number()) throw std::domain_error(std::string(where) + " must hold numbers");
    x[i++] = v.get<double>();
  }
  return x;
}

SpectralBasisXd parse_basis(const json& j) {
  if (!j.contains("basis")) throw std::domain_error("config.basis is required");
  const auto& b = j.at("basis");
  const int d = b.at("d").get<int>();
  const std::string law = b.value("law", "exact_power");
  if (law == "exact_power") return SpectralBasisXd::power_law(d, b.at("p").get<double>());
  if (law == "explicit")
    return SpectralBasisXd::explicit_list(d, to_coeffs(b.at("alphas"), "basis.alphas"),
                                          b.at("c_minus").get<double>(),
                                          b.at("c_plus").get<double>());
  throw std::domain_error("basis.law must be 'exact_power' or 'explicit'");
}

NoiseKind parse_kind(const std::string& s) {
  if (s == "gaussian") return NoiseKind::Gaussian;
  if (s == "laplacian") return NoiseKind::Laplacian;
  throw std::domain_error("noise.kind must be 'gaussian' or 'laplacian'");
}

}  // namespace

std::string AppConfig::basis_descr() const {
  std::ostringstream ss;
  if (exp.basis.law() == SpectralBasisXd::Law::PowerLaw)
    ss << "exact_power(p=" << format_double(exp.basis.power_constant())
       << ",d=" << exp.basis.dimension() << ")";
  else
    ss << "explicit(d=" << exp.basis.dimension() << ")";
  return ss.str();
}

AppConfig load_config(const std::string& path) {
  AppConfig cfg;
  cfg.raw_bytes = read_file(path);
  json j;
  try {
    j = json::parse(cfg.raw_bytes);
  } catch (const json::parse_error& e) {
    throw std::domain_error(std::string("config is not valid JSON: ") + e.what());
  }

  try {
    cfg.exp.basis = parse_basis(j);
    const auto& prior = j.at("prior");
    cfg.exp.prior = PriorSpecXd{prior.at("r").get<double>(), prior.at("tau").get<double>()};
    const auto& noise = j.at("noise");
    cfg.exp.noise = NoiseModelXd{parse_kind(noise.at("kind").get<std::string>()),
                                 noise.at("b").get<double>(), noise.at("beta").get<double>()};
    cfg.exp.truncation = j.at("truncation").get<Index>();
    cfg.exp.seed = j.value("seed", std::uint64_t(0));
    cfg.exp.replicates = j.value("replicates", 10000LL);
    cfg.exp.threads = j.value("threads", 1);

    if (j.contains("rate")) {
      const auto& r = j.at("rate");
      for (const auto& b : r.at("b_grid")) cfg.exp.b_grid.push_back(b.get<double>());
      cfg.exp.rate_constant = r.value("C", 1.0);
    }
    if (j.contains("source")) {
      const auto& s = j.at("source");
      SourceCondition src;
      src.rho = s.at("rho").get<double>();
      if (s.contains("w"))
        src.w = to_coeffs(s.at("w"), "source.w");
      else if (s.contains("w_constant"))
        src.w = CoeffsXd::Constant(cfg.exp.truncation, s.at("w_constant").get<double>());
      else
        throw std::domain_error("source needs either 'w' or 'w_constant'");
      src.validate();
      cfg.source = std::move(src);
    }
    if (j.contains("map")) cfg.map_check_tol = j.at("map").value("check_tol", 1e-8);

    if (j.contains("smallball")) {
      const auto& s = j.at("smallball");
      SmallballConfig sb;
      if (s.contains("epsilons")) {
        sb.epsilons.clear();
        for (const auto& e : s.at("epsilons")) sb.epsilons.push_back(e.get<double>());
      }
      sb.samples = s.value("samples", 1000000LL);
      sb.prior_only = s.value("prior_only", false);
      sb.y = s.contains("y") ? to_coeffs(s.at("y"), "smallball.y")
                             : CoeffsXd(CoeffsXd::Zero(cfg.exp.truncation));
      if (!s.contains("centers")) throw std::domain_error("smallball.centers is required");
      for (const auto& c : s.at("centers")) {
        CenterSpec cs;
        cs.label = c.at("label").get<std::string>();
        const std::string type = c.value("type", c.contains("coeffs") ? "explicit" : "zero");
        if (type == "map")
          cs.kind = CenterSpec::Kind::Map;
        else if (type == "zero")
          cs.kind = CenterSpec::Kind::Zero;
        else if (type == "explicit") {
          cs.kind = CenterSpec::Kind::Explicit;
          cs.coeffs = to_coeffs(c.at("coeffs"), "smallball.centers[].coeffs");
        } else
          throw std::domain_error("smallball center type must be map|zero|explicit");
        sb.centers.push_back(std::move(cs));
      }
      cfg.smallball = std::move(sb);
    }

    if (j.contains("diagnose")) {
      const auto& d = j.at("diagnose");
      DiagnoseConfig dg;
      if (d.contains("shifts"))
        for (const auto& s : d.at("shifts"))
          dg.shifts.emplace_back(s.at("label").get<std::string>(),
                                 to_coeffs(s.at("coeffs"), "diagnose.shifts[].coeffs"));
      if (d.contains("kakutani_grid"))
        for (const auto& g : d.at("kakutani_grid")) dg.kakutani_grid.push_back(g.get<Index>());
      if (d.contains("witness_n")) {
        dg.witness_n.clear();
        for (const auto& n : d.at("witness_n")) dg.witness_n.push_back(n.get<Index>());
      }
      dg.cond_threshold = d.value("cond_threshold", 1e12);
      cfg.diagnose = std::move(dg);
    }
  } catch (const json::exception& e) {
    throw std::domain_error(std::string("config: ") + e.what());
  }

  cfg.exp.validate();
  return cfg;
}

}  // namespace specmap::cli
