#include "npmix/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "npmix/errors.hpp"
#include "npmix/hermite.hpp"
#include "npmix/numerics.hpp"
#include "npmix/summary.hpp"
#include "npmix/synthgen.hpp"

namespace npmix {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size()) {
    throw InvalidArgumentError(what + ": cannot parse number '" + s + "'");
  }
  return v;
}

long long parse_int(const std::string& s, const std::string& what) {
  const double v = parse_double(s, what);
  const long long i = (long long)v;
  if ((double)i != v) {
    throw InvalidArgumentError(what + ": expected an integer, got '" + s + "'");
  }
  return i;
}

bool parse_bool(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off") return false;
  throw InvalidArgumentError(what + ": expected a boolean, got '" + s + "'");
}

std::vector<double> parse_vector(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const std::string& part : split(s, ',')) {
    out.push_back(parse_double(part, what));
  }
  return out;
}

std::vector<std::vector<double>> parse_vector_list(const std::string& s,
                                                   const std::string& what) {
  std::vector<std::vector<double>> out;
  for (const std::string& part : split(s, ';')) {
    out.push_back(parse_vector(part, what));
  }
  return out;
}

}  // namespace

// --- config ------------------------------------------------------------------------

void apply_config_entry(RunConfig& cfg, const std::string& key,
                        const std::string& value) {
  const std::string k = trim(key);
  if (k == "input") cfg.input = trim(value);
  else if (k == "output_dir") cfg.output_dir = trim(value);
  else if (k == "K") cfg.K = (int)parse_int(value, k);
  else if (k == "dp_alpha") cfg.dp_alpha = parse_double(value, k);
  else if (k == "mu0") cfg.mu0 = parse_vector(value, k);
  else if (k == "eta") cfg.eta = parse_double(value, k);
  else if (k == "gamma_shape") cfg.gamma_shape = parse_double(value, k);
  else if (k == "gamma_rate") cfg.gamma_rate = parse_double(value, k);
  else if (k == "tau") cfg.tau = parse_double(value, k);
  else if (k == "nu") cfg.nu = (int)parse_int(value, k);
  else if (k == "sigma0") cfg.sigma0 = parse_double(value, k);
  else if (k == "theta1") cfg.theta1 = parse_double(value, k);
  else if (k == "theta2") cfg.theta2 = parse_double(value, k);
  else if (k == "iw_df") cfg.iw_df = parse_double(value, k);
  else if (k == "iw_scale") cfg.iw_scale = parse_double(value, k);
  else if (k == "dirichlet_conc") cfg.dirichlet_conc = parse_double(value, k);
  else if (k == "separation_axis") cfg.separation_axis = trim(value);
  else if (k == "regions_fixed") cfg.regions_fixed = parse_bool(value, k);
  else if (k == "fixed_centers") cfg.fixed_centers = parse_vector_list(value, k);
  else if (k == "fixed_radii") cfg.fixed_radii = parse_vector(value, k);
  else if (k == "background_lo") cfg.background_lo = parse_vector(value, k);
  else if (k == "background_hi") cfg.background_hi = parse_vector(value, k);
  else if (k == "loc_mu0") cfg.loc_mu0 = parse_double(value, k);
  else if (k == "loc_eta") cfg.loc_eta = parse_double(value, k);
  else if (k == "iters") cfg.iters = parse_int(value, k);
  else if (k == "burnin") cfg.burnin = parse_int(value, k);
  else if (k == "thin") cfg.thin = parse_int(value, k);
  else if (k == "seed") cfg.seed = (std::uint64_t)parse_int(value, k);
  else if (k == "threads") cfg.threads = (int)parse_int(value, k);
  else if (k == "grid_points") cfg.grid_points = (int)parse_int(value, k);
  else if (k == "grid_pad") cfg.grid_pad = parse_double(value, k);
  else if (k == "band_level") cfg.band_level = parse_double(value, k);
  else if (k == "weight_level") cfg.weight_level = parse_double(value, k);
  else if (k == "cdf") cfg.cdf = parse_bool(value, k);
  else if (k == "cdf_points") cfg.cdf_points = (int)parse_int(value, k);
  else {
    throw InvalidArgumentError("config: unknown key '" + k + "'");
  }
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidArgumentError("config: cannot open '" + path + "'");
  }
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgumentError("config: line " + std::to_string(line_no) +
                                 " is not key=value");
    }
    apply_config_entry(cfg, t.substr(0, eq), t.substr(eq + 1));
  }
  return cfg;
}

Hyperparams build_hyperparams(const RunConfig& cfg, const Dataset& data) {
  Hyperparams hp;
  const int m = data.m();
  const int n = data.n();

  if (cfg.K) hp.K = *cfg.K;
  if (cfg.dp_alpha) hp.dp_alpha = *cfg.dp_alpha;
  if (cfg.eta) hp.eta = *cfg.eta;
  if (cfg.gamma_shape) hp.gamma_shape = *cfg.gamma_shape;
  if (cfg.gamma_rate) hp.gamma_rate = *cfg.gamma_rate;
  if (cfg.tau) hp.tau = *cfg.tau;
  if (cfg.nu) hp.nu = *cfg.nu;
  if (cfg.sigma0) hp.sigma0 = *cfg.sigma0;
  if (cfg.theta1) hp.theta1 = *cfg.theta1;
  if (cfg.theta2) hp.theta2 = *cfg.theta2;
  if (cfg.iw_df) hp.iw_df = *cfg.iw_df;
  if (cfg.iw_scale) {
    hp.iw_scale = *cfg.iw_scale * Eigen::MatrixXd::Identity(m, m);
  }
  if (cfg.dirichlet_conc) hp.dirichlet_conc = *cfg.dirichlet_conc;
  if (cfg.separation_axis) {
    if (*cfg.separation_axis == "location") {
      hp.separation_axis = SeparationAxis::location;
    } else if (*cfg.separation_axis == "scale") {
      hp.separation_axis = SeparationAxis::scale;
    } else {
      throw InvalidArgumentError(
          "config: separation_axis must be 'location' or 'scale'");
    }
  }
  if (cfg.regions_fixed) hp.regions_fixed = *cfg.regions_fixed;
  if (cfg.fixed_centers) {
    for (const auto& c : *cfg.fixed_centers) {
      hp.fixed_centers.push_back(
          Eigen::Map<const Eigen::VectorXd>(c.data(), (int)c.size()));
    }
  }
  if (cfg.fixed_radii) hp.fixed_radii = *cfg.fixed_radii;
  if (cfg.background_lo || cfg.background_hi) {
    if (!cfg.background_lo || !cfg.background_hi) {
      throw InvalidArgumentError(
          "config: background_lo and background_hi must both be set");
    }
    Window win;
    win.lo = Eigen::Map<const Eigen::VectorXd>(cfg.background_lo->data(),
                                               (int)cfg.background_lo->size());
    win.hi = Eigen::Map<const Eigen::VectorXd>(cfg.background_hi->data(),
                                               (int)cfg.background_hi->size());
    hp.background = win;
  }
  if (cfg.loc_mu0) hp.loc_mu0 = *cfg.loc_mu0;
  if (cfg.loc_eta) hp.loc_eta = *cfg.loc_eta;

  // Data-driven defaults for unset scale-bearing fields.
  if (n > 0) {
    Eigen::VectorXd mean = data.x.colwise().mean();
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
      ss += (data.x.row(i).transpose() - mean).squaredNorm();
    }
    const double sd =
        (n > 1) ? std::sqrt(ss / ((double)(n - 1) * m)) : 1.0;
    const double safe_sd = (sd > 0.0) ? sd : 1.0;
    const bool scale_mode = hp.separation_axis == SeparationAxis::scale;

    if (cfg.mu0) {
      hp.mu0 = Eigen::Map<const Eigen::VectorXd>(cfg.mu0->data(),
                                                 (int)cfg.mu0->size());
    } else if (!scale_mode) {
      hp.mu0 = mean;
    } else {
      hp.mu0 = Eigen::VectorXd::Constant(1, 0.7 * safe_sd);
    }
    if (!cfg.eta) hp.eta = 2.0 * safe_sd;
    if (!cfg.sigma0) hp.sigma0 = safe_sd;
    // Atom-variance prior scale anchored to the per-component share of the
    // spread (sd/K), not the full-mixture sd: a too-large theta2 inflates
    // every small cluster's variance, while a too-small one washes out
    // quickly against the data.
    if (!cfg.theta2) {
      const double sd_comp = safe_sd / (double)hp.K;
      hp.theta2 = 0.25 * sd_comp * sd_comp;
    }
    if (!cfg.gamma_rate) hp.gamma_rate = hp.gamma_shape * hp.K / (2.0 * safe_sd);
    if (scale_mode) {
      if (!cfg.loc_mu0) hp.loc_mu0 = mean(0);
      if (!cfg.loc_eta) hp.loc_eta = 2.0 * safe_sd;
    }
  } else if (cfg.mu0) {
    hp.mu0 = Eigen::Map<const Eigen::VectorXd>(cfg.mu0->data(),
                                               (int)cfg.mu0->size());
  }

  hp.finalize(m);
  return hp;
}

// --- CSV ---------------------------------------------------------------------------

Dataset read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidArgumentError("csv: cannot open '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw InvalidArgumentError("csv: '" + path + "' is empty");
  }
  Dataset data;
  for (const std::string& name : split(trim(line), ',')) {
    data.columns.push_back(trim(name));
  }
  const int m = (int)data.columns.size();
  std::vector<double> values;
  long long rows = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::vector<std::string> parts = split(t, ',');
    if ((int)parts.size() != m) {
      throw InvalidArgumentError("csv: line " + std::to_string(line_no) +
                                 " has " + std::to_string(parts.size()) +
                                 " fields, expected " + std::to_string(m));
    }
    for (const std::string& p : parts) {
      const double v = parse_double(p, "csv line " + std::to_string(line_no));
      if (!std::isfinite(v)) {
        throw InvalidArgumentError("csv: non-finite value at line " +
                                   std::to_string(line_no));
      }
      values.push_back(v);
    }
    ++rows;
  }
  data.x.resize(rows, m);
  for (long long i = 0; i < rows; ++i) {
    for (int d = 0; d < m; ++d) data.x(i, d) = values[i * m + d];
  }
  return data;
}

void write_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) {
    throw InvalidArgumentError("csv: cannot write '" + path + "'");
  }
  for (size_t d = 0; d < data.columns.size(); ++d) {
    out << (d ? "," : "") << data.columns[d];
  }
  out << "\n";
  for (int i = 0; i < data.n(); ++i) {
    for (int d = 0; d < data.m(); ++d) {
      out << (d ? "," : "") << fmt(data.x(i, d));
    }
    out << "\n";
  }
}

// --- snapshot file -----------------------------------------------------------------

namespace {

std::string join_vector(const Eigen::VectorXd& v) {
  std::string s;
  for (int i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += fmt(v(i));
  }
  return s;
}

std::string join_matrix(const Eigen::MatrixXd& a) {
  std::string s;
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) {
      if (i + j) s += ",";
      s += fmt(a(i, j));
    }
  }
  return s;
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), (int)v.size());
}

}  // namespace

void write_snapshots(const std::string& path, const ChainOutput& out) {
  std::ofstream f(path);
  if (!f) {
    throw InvalidArgumentError("snapshots: cannot write '" + path + "'");
  }
  const Hyperparams& hp = out.hp;
  const int m = hp.dim();
  f << "# npmix-snapshots v1\n";
  f << "# hp K " << hp.K << "\n";
  f << "# hp dp_alpha " << fmt(hp.dp_alpha) << "\n";
  f << "# hp mu0 " << join_vector(hp.mu0) << "\n";
  f << "# hp eta " << fmt(hp.eta) << "\n";
  f << "# hp gamma_shape " << fmt(hp.gamma_shape) << "\n";
  f << "# hp gamma_rate " << fmt(hp.gamma_rate) << "\n";
  f << "# hp tau " << fmt(hp.tau) << "\n";
  f << "# hp nu " << hp.nu << "\n";
  f << "# hp sigma0 " << fmt(hp.sigma0) << "\n";
  f << "# hp theta1 " << fmt(hp.theta1) << "\n";
  f << "# hp theta2 " << fmt(hp.theta2) << "\n";
  f << "# hp iw_df " << fmt(hp.iw_df) << "\n";
  f << "# hp iw_scale " << join_matrix(hp.iw_scale) << "\n";
  f << "# hp dirichlet_conc " << fmt(hp.dirichlet_conc) << "\n";
  f << "# hp separation_axis "
    << (hp.separation_axis == SeparationAxis::scale ? "scale" : "location")
    << "\n";
  f << "# hp regions_fixed " << (hp.regions_fixed ? 1 : 0) << "\n";
  if (hp.regions_fixed) {
    std::string cs;
    for (size_t k = 0; k < hp.fixed_centers.size(); ++k) {
      if (k) cs += ";";
      cs += join_vector(hp.fixed_centers[k]);
    }
    f << "# hp fixed_centers " << cs << "\n";
    std::string rs;
    for (size_t k = 0; k < hp.fixed_radii.size(); ++k) {
      if (k) rs += ",";
      rs += fmt(hp.fixed_radii[k]);
    }
    f << "# hp fixed_radii " << rs << "\n";
  }
  if (hp.background.has_value()) {
    f << "# hp background " << join_vector(hp.background->lo) << "|"
      << join_vector(hp.background->hi) << "\n";
  }
  f << "# hp loc_mu0 " << fmt(hp.loc_mu0) << "\n";
  f << "# hp loc_eta " << fmt(hp.loc_eta) << "\n";
  f << "# mh_accept_rate " << fmt(out.mh_accept_rate) << "\n";
  f << "# mh_step_final " << fmt(out.mh_step_final) << "\n";
  f << "# seconds " << fmt(out.seconds) << "\n";
  f << "# record: snapshot t | w ... | c k ... | r k v | locmean ... | "
       "atom k j beta u... cov... | end\n";

  for (size_t t = 0; t < out.snapshots.size(); ++t) {
    const ChainState& st = out.snapshots[t];
    f << "snapshot " << t << "\n";
    f << "w";
    for (int k = 0; k < st.K(); ++k) f << " " << fmt(st.w(k));
    if (hp.background.has_value()) f << " " << fmt(st.w_bg);
    f << "\n";
    for (int k = 0; k < st.K(); ++k) {
      f << "c " << (k + 1);
      for (int d = 0; d < m; ++d) f << " " << fmt(st.c[k](d));
      f << "\n";
      f << "r " << (k + 1) << " " << fmt(st.r[k]) << "\n";
    }
    if (!st.loc_mean.empty()) {
      f << "locmean";
      for (double v : st.loc_mean) f << " " << fmt(v);
      f << "\n";
    }
    for (int k = 0; k < st.K(); ++k) {
      for (size_t j = 0; j < st.atoms[k].size(); ++j) {
        const Atom& a = st.atoms[k][j];
        f << "atom " << (k + 1) << " " << j << " " << fmt(a.beta);
        for (int d = 0; d < m; ++d) f << " " << fmt(a.u(d));
        if (m == 1) {
          f << " " << fmt(a.sigma2);
        } else {
          for (int d = 0; d < m; ++d) {
            for (int e = 0; e <= d; ++e) f << " " << fmt(a.sigma(d, e));
          }
        }
        f << "\n";
      }
    }
    f << "end\n";
  }
}

ChainOutput read_snapshots(const std::string& path) {
  std::ifstream f(path);
  if (!f) {
    throw InvalidArgumentError("snapshots: cannot open '" + path + "'");
  }
  std::string line;
  if (!std::getline(f, line) || trim(line) != "# npmix-snapshots v1") {
    throw InvalidArgumentError("snapshots: '" + path +
                               "' missing version header");
  }

  ChainOutput out;
  Hyperparams& hp = out.hp;
  int m = 1;
  ChainState cur;
  bool in_snapshot = false;

  auto hp_entry = [&](const std::string& key, const std::string& value) {
    if (key == "K") hp.K = (int)parse_int(value, key);
    else if (key == "dp_alpha") hp.dp_alpha = parse_double(value, key);
    else if (key == "mu0") hp.mu0 = to_eigen(parse_vector(value, key));
    else if (key == "eta") hp.eta = parse_double(value, key);
    else if (key == "gamma_shape") hp.gamma_shape = parse_double(value, key);
    else if (key == "gamma_rate") hp.gamma_rate = parse_double(value, key);
    else if (key == "tau") hp.tau = parse_double(value, key);
    else if (key == "nu") hp.nu = (int)parse_int(value, key);
    else if (key == "sigma0") hp.sigma0 = parse_double(value, key);
    else if (key == "theta1") hp.theta1 = parse_double(value, key);
    else if (key == "theta2") hp.theta2 = parse_double(value, key);
    else if (key == "iw_df") hp.iw_df = parse_double(value, key);
    else if (key == "iw_scale") {
      const std::vector<double> v = parse_vector(value, key);
      const int dim = (int)std::lround(std::sqrt((double)v.size()));
      hp.iw_scale.resize(dim, dim);
      for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) hp.iw_scale(i, j) = v[i * dim + j];
      }
    } else if (key == "dirichlet_conc") {
      hp.dirichlet_conc = parse_double(value, key);
    } else if (key == "separation_axis") {
      hp.separation_axis = (trim(value) == "scale") ? SeparationAxis::scale
                                                    : SeparationAxis::location;
    } else if (key == "regions_fixed") {
      hp.regions_fixed = parse_bool(value, key);
    } else if (key == "fixed_centers") {
      for (const auto& c : parse_vector_list(value, key)) {
        hp.fixed_centers.push_back(to_eigen(c));
      }
    } else if (key == "fixed_radii") {
      hp.fixed_radii = parse_vector(value, key);
    } else if (key == "background") {
      const std::vector<std::string> halves = split(trim(value), '|');
      if (halves.size() != 2) {
        throw InvalidArgumentError("snapshots: malformed background line");
      }
      Window win;
      win.lo = to_eigen(parse_vector(halves[0], key));
      win.hi = to_eigen(parse_vector(halves[1], key));
      hp.background = win;
    } else if (key == "loc_mu0") {
      hp.loc_mu0 = parse_double(value, key);
    } else if (key == "loc_eta") {
      hp.loc_eta = parse_double(value, key);
    } else if (key == "mh_accept_rate") {
      out.mh_accept_rate = parse_double(value, key);
    } else if (key == "mh_step_final") {
      out.mh_step_final = parse_double(value, key);
    } else if (key == "seconds") {
      out.seconds = parse_double(value, key);
    } else if (key == "record:") {
      // format reminder line, ignored
    } else {
      throw InvalidArgumentError("snapshots: unknown header key '" + key + "'");
    }
  };

  bool hp_done = false;
  while (std::getline(f, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      std::istringstream ss(t.substr(1));
      std::string tag, key;
      ss >> tag;
      if (tag == "hp") {
        ss >> key;
        std::string rest;
        std::getline(ss, rest);
        hp_entry(key, trim(rest));
      } else {
        std::string rest;
        std::getline(ss, rest);
        hp_entry(tag, trim(rest));
      }
      continue;
    }
    if (!hp_done) {
      hp.finalize((int)hp.mu0.size() > 0 ? (int)hp.mu0.size() : 1);
      m = hp.dim();
      hp_done = true;
    }
    std::istringstream ss(t);
    std::string tag;
    ss >> tag;
    if (tag == "snapshot") {
      cur = ChainState{};
      cur.c.assign(hp.K, Eigen::VectorXd::Zero(m));
      cur.r.assign(hp.K, 0.0);
      cur.atoms.assign(hp.K, {});
      cur.rho_star_kj.assign(hp.K, {});
      cur.i_star_kj.assign(hp.K, {});
      cur.w = Eigen::VectorXd::Zero(hp.K);
      in_snapshot = true;
    } else if (!in_snapshot) {
      throw InvalidArgumentError("snapshots: record outside a snapshot block");
    } else if (tag == "w") {
      for (int k = 0; k < hp.K; ++k) ss >> cur.w(k);
      if (hp.background.has_value()) ss >> cur.w_bg;
    } else if (tag == "c") {
      int k;
      ss >> k;
      for (int d = 0; d < m; ++d) ss >> cur.c[k - 1](d);
    } else if (tag == "r") {
      int k;
      ss >> k;
      ss >> cur.r[k - 1];
    } else if (tag == "locmean") {
      cur.loc_mean.assign(hp.K, 0.0);
      for (int k = 0; k < hp.K; ++k) ss >> cur.loc_mean[k];
    } else if (tag == "atom") {
      int k;
      long long j;
      ss >> k >> j;
      Atom a;
      ss >> a.beta;
      a.u.resize(m);
      for (int d = 0; d < m; ++d) ss >> a.u(d);
      if (m == 1) {
        ss >> a.sigma2;
      } else {
        a.sigma.resize(m, m);
        for (int d = 0; d < m; ++d) {
          for (int e = 0; e <= d; ++e) {
            ss >> a.sigma(d, e);
            a.sigma(e, d) = a.sigma(d, e);
          }
        }
      }
      if (!ss) {
        throw InvalidArgumentError("snapshots: malformed atom record");
      }
      a.refresh_cache();
      if ((size_t)j != cur.atoms[k - 1].size()) {
        throw InvalidArgumentError("snapshots: atom records out of order");
      }
      cur.atoms[k - 1].push_back(std::move(a));
      cur.rho_star_kj[k - 1].push_back(INFINITY);
      cur.i_star_kj[k - 1].push_back(-1);
    } else if (tag == "end") {
      out.snapshots.push_back(std::move(cur));
      in_snapshot = false;
    } else {
      throw InvalidArgumentError("snapshots: unknown record '" + tag + "'");
    }
  }
  if (in_snapshot) {
    throw InvalidArgumentError("snapshots: truncated final snapshot");
  }
  if (!hp_done) {
    throw InvalidArgumentError("snapshots: no snapshot records found");
  }
  return out;
}

// --- command helpers -----------------------------------------------------------------

namespace {

int resolve_thread_request(const RunConfig& cfg) {
  if (const char* env = std::getenv("NPMIX_THREADS")) {
    const std::string s = trim(env);
    if (!s.empty()) return (int)parse_int(s, "NPMIX_THREADS");
  }
  return cfg.threads.value_or(1);
}

fs::path out_dir(const RunConfig& cfg) {
  fs::path dir = cfg.output_dir.value_or(".");
  fs::create_directories(dir);
  return dir;
}

void write_density_csv(const fs::path& path, const DensityGrid& g) {
  std::ofstream f(path);
  if (!f) {
    throw InvalidArgumentError("summarize: cannot write '" + path.string() +
                               "'");
  }
  if (g.grid2.empty()) {
    f << "grid,mean,lo,hi\n";
    for (size_t i = 0; i < g.grid.size(); ++i) {
      f << fmt(g.grid[i]) << "," << fmt(g.mean[i]) << "," << fmt(g.lower[i])
        << "," << fmt(g.upper[i]) << "\n";
    }
  } else {
    f << "x,y,mean,lo,hi\n";
    for (size_t i = 0; i < g.grid.size(); ++i) {
      for (size_t j = 0; j < g.grid2.size(); ++j) {
        const size_t p = i * g.grid2.size() + j;
        f << fmt(g.grid[i]) << "," << fmt(g.grid2[j]) << "," << fmt(g.mean[p])
          << "," << fmt(g.lower[p]) << "," << fmt(g.upper[p]) << "\n";
      }
    }
  }
}

json component_manifest(const std::string& type, const json& params,
                        const SyntheticComponent& comp) {
  json j;
  j["type"] = type;
  j["params"] = params;
  if (std::isfinite(comp.support_lo) && std::isfinite(comp.support_hi)) {
    j["support"] = {comp.support_lo, comp.support_hi};
  } else {
    j["support"] = nullptr;
  }
  return j;
}

struct Design {
  SyntheticTruth truth;
  json manifest;
};

Design make_design(const std::string& name, std::uint64_t seed) {
  Design d;
  d.manifest["design"] = name;
  d.manifest["seed"] = seed;
  if (name == "two-gauss") {
    d.truth.weights = {0.7, 0.3};
    d.truth.components.push_back(gaussian_density(-3.0, 0.5));
    d.truth.components.push_back(gaussian_density(3.0, 0.5));
    d.manifest["components"] = {
        component_manifest("gaussian", {{"mu", -3.0}, {"sigma", 0.5}},
                           d.truth.components[0]),
        component_manifest("gaussian", {{"mu", 3.0}, {"sigma", 0.5}},
                           d.truth.components[1])};
  } else if (name == "three-mixed") {
    d.truth.weights = {0.4, 0.35, 0.25};
    d.truth.components.push_back(
        hermite_random_density(-7.0, 1.0, 4, seed + 1));
    d.truth.components.push_back(laplace_density(0.0, 0.4));
    d.truth.components.push_back(skew_exp_power_density(8.0, 0.8, 1.5, 0.3));
    d.manifest["components"] = {
        component_manifest("hermite",
                           {{"center", -7.0},
                            {"halfwidth", 1.0},
                            {"degree", 4},
                            {"seed", seed + 1}},
                           d.truth.components[0]),
        component_manifest("laplace", {{"mu", 0.0}, {"b", 0.4}},
                           d.truth.components[1]),
        component_manifest("skew_exp_power",
                           {{"mu", 8.0},
                            {"alpha", 0.8},
                            {"beta_shape", 1.5},
                            {"skew", 0.3}},
                           d.truth.components[2])};
  } else if (name == "circle-gmm") {
    d.truth.weights = {0.55, 0.45};
    d.truth.components.push_back(
        gmm_on_circle(Eigen::Vector2d(-6.0, 0.0), 2.0, 4, 1.0, seed + 1));
    d.truth.components.push_back(
        gmm_on_circle(Eigen::Vector2d(6.0, 0.0), 2.0, 4, 1.0, seed + 2));
    d.manifest["components"] = {
        component_manifest("circle_gmm",
                           {{"center", {-6.0, 0.0}},
                            {"radius", 2.0},
                            {"n_atoms", 4},
                            {"cov_scale", 1.0},
                            {"seed", seed + 1}},
                           d.truth.components[0]),
        component_manifest("circle_gmm",
                           {{"center", {6.0, 0.0}},
                            {"radius", 2.0},
                            {"n_atoms", 4},
                            {"cov_scale", 1.0},
                            {"seed", seed + 2}},
                           d.truth.components[1])};
  } else {
    throw InvalidArgumentError(
        "simulate: unknown design '" + name +
        "' (choose two-gauss, three-mixed, or circle-gmm)");
  }
  d.truth.validate();
  d.manifest["weights"] = d.truth.weights;
  d.manifest["dim"] = d.truth.dim();
  return d;
}

// --- commands ----------------------------------------------------------------

int cmd_fit(const RunConfig& cfg) {
  if (!cfg.input) throw InvalidArgumentError("fit: input is required");
  const Dataset data = read_csv(*cfg.input);
  data.validate();
  const Hyperparams hp = build_hyperparams(cfg, data);

  SweepPlan plan;
  const int threads = resolve_thread_request(cfg);
  plan.parallel = threads > 1;
  plan.thread_count = threads;

  const long long iters = cfg.iters.value_or(2000);
  const long long burnin = cfg.burnin.value_or(iters / 4);
  const long long thin = cfg.thin.value_or(1);
  const std::uint64_t seed = cfg.seed.value_or(20240901ull);

  const ChainOutput out = run(data, hp, plan, iters, burnin, thin, seed);

  const fs::path dir = out_dir(cfg);
  write_snapshots((dir / "snapshots.txt").string(), out);
  {
    std::ofstream ll(dir / "loglik.csv");
    ll << "iteration,loglik\n";
    for (size_t t = 0; t < out.loglik.size(); ++t) {
      ll << t << "," << fmt(out.loglik[t]) << "\n";
    }
  }
  std::cout << "fit: n=" << data.n() << " m=" << data.m() << " K=" << hp.K
            << "\n"
            << "iters=" << iters << " burnin=" << burnin << " thin=" << thin
            << " seed=" << seed << " threads=" << threads << "\n"
            << "snapshots=" << out.snapshots.size()
            << " seconds=" << fmt(out.seconds)
            << " mh_accept_rate=" << fmt(out.mh_accept_rate)
            << " mh_step_final=" << fmt(out.mh_step_final) << "\n"
            << "wrote " << (dir / "snapshots.txt").string() << "\n";
  return 0;
}

int cmd_simulate(const std::string& design, long long n, std::uint64_t seed,
                 const RunConfig& cfg) {
  if (n < 1) throw InvalidArgumentError("simulate: n must be >= 1");
  Design d = make_design(design, seed);
  const LabeledSample sample = sample_mixture(d.truth, n, seed);
  d.manifest["n"] = n;

  const fs::path dir = out_dir(cfg);
  write_csv((dir / "data.csv").string(), sample.data);
  {
    std::ofstream lf(dir / "labels.csv");
    lf << "label\n";
    for (int lab : sample.labels) lf << lab << "\n";
  }
  {
    std::ofstream mf(dir / "truth.json");
    mf << d.manifest.dump(2) << "\n";
  }
  std::cout << "simulate: design=" << design << " n=" << n << " seed=" << seed
            << " dim=" << d.truth.dim() << "\n"
            << "wrote " << (dir / "data.csv").string() << ", "
            << (dir / "truth.json").string() << "\n";
  return 0;
}

int cmd_summarize(const std::string& snapshots_path,
                  const std::string& data_path, const RunConfig& cfg) {
  const ChainOutput chain = read_snapshots(snapshots_path);
  const int m = chain.hp.dim();
  const int points = cfg.grid_points.value_or(m == 1 ? 512 : 96);
  const double pad = cfg.grid_pad.value_or(3.0);
  const double band = cfg.band_level.value_or(0.95);
  const double wlevel = cfg.weight_level.value_or(0.68);

  // Grid source: the data when provided, otherwise atom locations.
  std::vector<std::vector<double>> axis_values(m);
  if (!data_path.empty()) {
    const Dataset data = read_csv(data_path);
    if (data.m() != m) {
      throw InvalidArgumentError("summarize: data dimension mismatch");
    }
    for (int d = 0; d < m; ++d) {
      axis_values[d].reserve(data.n());
      for (int i = 0; i < data.n(); ++i) axis_values[d].push_back(data.x(i, d));
    }
  } else {
    for (const ChainState& st : chain.snapshots) {
      for (const auto& comp : st.atoms) {
        for (const Atom& a : comp) {
          for (int d = 0; d < m; ++d) axis_values[d].push_back(a.u(d));
        }
      }
    }
  }

  const fs::path dir = out_dir(cfg);

  const WeightTable wt = weight_table(chain, wlevel);
  {
    std::ofstream wf(dir / "weights.csv");
    wf << "component,mean,lo,hi\n";
    for (size_t k = 0; k < wt.rows.size(); ++k) {
      const bool is_bg = wt.has_background && k + 1 == wt.rows.size();
      wf << (is_bg ? std::string("background") : std::to_string(k + 1)) << ","
         << fmt(wt.rows[k].mean) << "," << fmt(wt.rows[k].lower) << ","
         << fmt(wt.rows[k].upper) << "\n";
    }
  }

  if (m == 1) {
    const std::vector<double> grid = default_grid(axis_values[0], points, pad);
    write_density_csv(dir / "density_mixture.csv",
                      density_band(chain, DensityTarget::mixture, 0, grid,
                                   band));
    for (int k = 1; k <= chain.hp.K; ++k) {
      write_density_csv(
          dir / ("density_component_" + std::to_string(k) + ".csv"),
          density_band(chain, DensityTarget::component, k, grid, band));
    }
  } else if (m == 2) {
    const std::vector<double> gx = default_grid(axis_values[0], points, pad);
    const std::vector<double> gy = default_grid(axis_values[1], points, pad);
    write_density_csv(
        dir / "density_mixture.csv",
        density_band_2d(chain, DensityTarget::mixture, 0, gx, gy, band));
    for (int k = 1; k <= chain.hp.K; ++k) {
      write_density_csv(
          dir / ("density_component_" + std::to_string(k) + ".csv"),
          density_band_2d(chain, DensityTarget::component, k, gx, gy, band,
                          /*weighted=*/true));
    }
    if (cfg.cdf.value_or(false)) {
      const int cpoints = cfg.cdf_points.value_or(64);
      const std::vector<double> cx = default_grid(axis_values[0], cpoints, pad);
      const std::vector<double> cy = default_grid(axis_values[1], cpoints, pad);
      const std::vector<double> vals = cdf_grid(chain, cx, cy);
      std::ofstream cf(dir / "cdf.csv");
      cf << "x,y,cdf\n";
      for (size_t i = 0; i < cx.size(); ++i) {
        for (size_t j = 0; j < cy.size(); ++j) {
          cf << fmt(cx[i]) << "," << fmt(cy[j]) << ","
             << fmt(vals[i * cy.size() + j]) << "\n";
        }
      }
    }
  } else {
    throw InvalidArgumentError(
        "summarize: density grids support 1-D and 2-D chains only");
  }
  std::cout << "summarize: snapshots=" << chain.snapshots.size()
            << " K=" << chain.hp.K << " dim=" << m << "\n"
            << "wrote summaries under " << dir.string() << "\n";
  return 0;
}

int cmd_hermite_split(const std::string& data_path, double c1, double c2,
                      double sigma, double halfwidth, int ell, double epsilon,
                      const RunConfig& cfg) {
  const Dataset data = read_csv(data_path);
  if (data.m() != 1) {
    throw InvalidArgumentError("hermite-split: data must be univariate");
  }
  std::vector<double> samples(data.n());
  for (int i = 0; i < data.n(); ++i) samples[i] = data.x(i, 0);

  // halfwidth bounds the mixing supports around c1 and c2; it drives the
  // basis-size rule, not the separation between the centers.
  const double hw = (halfwidth > 0.0) ? halfwidth : sigma;
  int use_ell = ell;
  if (use_ell < 1) {
    if (!(epsilon > 0.0)) {
      throw InvalidArgumentError("hermite-split: provide --ell or --epsilon");
    }
    use_ell = choose_ell(epsilon, hw, sigma);
  }
  const int floor_ell =
      (int)std::floor(2.0 * std::exp(1.0) * hw * hw / (sigma * sigma)) + 1;
  if (use_ell < floor_ell) {
    std::cerr << "warning: ell=" << use_ell
              << " is below the separation threshold " << floor_ell
              << "; estimates may be biased\n";
  }

  const KdeEstimate kde = kde_fit(samples);
  const HermiteBasis basis(c1, c2, sigma, use_ell);
  const HermiteSplit split = hermite_split(kde, basis);

  const fs::path dir = out_dir(cfg);
  const int points = cfg.grid_points.value_or(512);
  const double reach =
      0.5 * (c2 - c1) + sigma * (std::sqrt(2.0 * use_ell) + 6.0);
  const double mid = 0.5 * (c1 + c2);
  std::vector<double> grid(points);
  for (int i = 0; i < points; ++i) {
    grid[i] = mid - reach + 2.0 * reach * i / (points - 1);
  }
  for (int comp = 1; comp <= 2; ++comp) {
    std::ofstream f(dir / ("split_component_" + std::to_string(comp) + ".csv"));
    f << "grid,density\n";
    const auto& fn =
        (comp == 1) ? split.estimates.f1 : split.estimates.f2;
    for (double x : grid) f << fmt(x) << "," << fmt(fn(x)) << "\n";
  }
  {
    std::ofstream wf(dir / "split_weights.csv");
    wf << "component,weight\n";
    wf << "1," << fmt(split.estimates.w1) << "\n";
    wf << "2," << fmt(split.estimates.w2) << "\n";
  }
  std::cout << "hermite-split: n=" << data.n() << " ell=" << use_ell
            << " bandwidth=" << fmt(kde.bandwidth()) << "\n"
            << "w1=" << fmt(split.estimates.w1)
            << " w2=" << fmt(split.estimates.w2) << "\n"
            << "wrote split outputs under " << dir.string() << "\n";
  return 0;
}

int cmd_check_separation(const std::string& manifest_path,
                         const std::string& snapshots_path, double gap) {
  std::vector<FiniteSupportSet> supports;
  if (!manifest_path.empty()) {
    std::ifstream mf(manifest_path);
    if (!mf) {
      throw InvalidArgumentError("check-separation: cannot open '" +
                                 manifest_path + "'");
    }
    json manifest;
    try {
      mf >> manifest;
    } catch (const std::exception& e) {
      throw InvalidArgumentError(std::string("check-separation: bad JSON: ") +
                                 e.what());
    }
    if (!manifest.contains("components")) {
      throw InvalidArgumentError(
          "check-separation: manifest has no components");
    }
    for (const auto& comp : manifest["components"]) {
      if (!comp.contains("support") || comp["support"].is_null()) {
        throw InvalidArgumentError(
            "check-separation: component without a support interval");
      }
      const double lo = comp["support"][0].get<double>();
      const double hi = comp["support"][1].get<double>();
      supports.push_back(FiniteSupportSet(std::vector<double>{lo, hi}));
    }
  } else if (!snapshots_path.empty()) {
    const ChainOutput chain = read_snapshots(snapshots_path);
    if (chain.hp.dim() != 1) {
      throw InvalidArgumentError(
          "check-separation: snapshot route requires univariate chains");
    }
    const ChainState& st = chain.snapshots.back();
    for (int k = 0; k < st.K(); ++k) {
      supports.push_back(FiniteSupportSet(std::vector<double>{
          st.c[k](0) - st.r[k], st.c[k](0) + st.r[k]}));
    }
  } else {
    throw InvalidArgumentError(
        "check-separation: provide --manifest or --snapshots");
  }

  const SeparationReport rep = check_separation_C2(supports, gap);
  std::cout << "components: " << supports.size() << "\n"
            << "gap: " << fmt(gap) << "\n"
            << "max_d_w: " << fmt(rep.max_d_w) << "\n"
            << "min_d_b: " << fmt(rep.min_d_b) << "\n"
            << "satisfied: " << (rep.satisfied ? "yes" : "no") << "\n";
  return 0;
}

}  // namespace

// --- dispatcher -----------------------------------------------------------------------

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Mixture-of-DPMs inference engine"};
  app.require_subcommand(1);

  // Shared config plumbing: --config loads a file, --set key=value overrides.
  struct Common {
    std::string config_path;
    std::vector<std::string> sets;
  };
  auto add_common = [](CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_path,
                    "key=value config file (unknown keys rejected)");
    sub->add_option("--set", c.sets,
                    "config override key=value (repeatable, wins over file)");
  };
  auto load_config = [](const Common& c) {
    RunConfig cfg;
    if (!c.config_path.empty()) cfg = parse_config_file(c.config_path);
    for (const std::string& kv : c.sets) {
      const size_t eq = kv.find('=');
      if (eq == std::string::npos) {
        throw InvalidArgumentError("--set expects key=value, got '" + kv + "'");
      }
      apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
  };

  // fit
  Common fit_common;
  std::string fit_input, fit_outdir;
  long long fit_iters = -1, fit_burnin = -1, fit_thin = -1;
  long long fit_seed = -1;
  int fit_threads = -1, fit_k = -1;
  CLI::App* fit = app.add_subcommand("fit", "run the sampler on a CSV dataset");
  add_common(fit, fit_common);
  fit->add_option("--input", fit_input, "input data CSV");
  fit->add_option("--output-dir", fit_outdir, "output directory");
  fit->add_option("--iters", fit_iters, "total sweeps");
  fit->add_option("--burnin", fit_burnin, "burn-in sweeps");
  fit->add_option("--thin", fit_thin, "thinning stride");
  fit->add_option("--seed", fit_seed, "RNG seed");
  fit->add_option("--threads", fit_threads, "worker threads");
  fit->add_option("--k", fit_k, "number of mixture components");

  // simulate
  Common sim_common;
  std::string sim_design = "two-gauss", sim_outdir;
  long long sim_n = 5000, sim_seed = 1;
  CLI::App* sim =
      app.add_subcommand("simulate", "generate a synthetic dataset + truth");
  add_common(sim, sim_common);
  sim->add_option("--design", sim_design,
                  "two-gauss | three-mixed | circle-gmm");
  sim->add_option("--n", sim_n, "number of observations");
  sim->add_option("--seed", sim_seed, "RNG seed");
  sim->add_option("--output-dir", sim_outdir, "output directory");

  // summarize
  Common sum_common;
  std::string sum_snapshots, sum_data, sum_outdir;
  int sum_grid_points = -1, sum_cdf_points = -1;
  double sum_band = -1.0, sum_wlevel = -1.0;
  bool sum_cdf = false;
  CLI::App* sum =
      app.add_subcommand("summarize", "density/CDF/weight summaries");
  add_common(sum, sum_common);
  sum->add_option("--snapshots", sum_snapshots, "snapshot file from fit")
      ->required();
  sum->add_option("--data", sum_data, "data CSV for grid bounds (optional)");
  sum->add_option("--output-dir", sum_outdir, "output directory");
  sum->add_option("--grid-points", sum_grid_points, "grid points per axis");
  sum->add_option("--band-level", sum_band, "credible band level");
  sum->add_option("--weight-level", sum_wlevel, "weight interval level");
  sum->add_flag("--cdf", sum_cdf, "also emit cdf.csv (2-D chains)");
  sum->add_option("--cdf-points", sum_cdf_points, "CDF grid points per axis");

  // hermite-split
  Common hs_common;
  std::string hs_data, hs_outdir;
  double hs_c1 = 0.0, hs_c2 = 0.0, hs_sigma = 1.0, hs_halfwidth = 0.0;
  double hs_epsilon = -1.0;
  int hs_ell = -1;
  CLI::App* hs = app.add_subcommand(
      "hermite-split", "two-component Hermite decomposition of a sample");
  add_common(hs, hs_common);
  hs->add_option("--data", hs_data, "input data CSV")->required();
  hs->add_option("--c1", hs_c1, "first support center")->required();
  hs->add_option("--c2", hs_c2, "second support center")->required();
  hs->add_option("--sigma", hs_sigma, "kernel scale");
  hs->add_option("--halfwidth", hs_halfwidth,
                 "mixing-support halfwidth (default: sigma)");
  hs->add_option("--ell", hs_ell, "basis size per component");
  hs->add_option("--epsilon", hs_epsilon, "accuracy target for choosing ell");
  hs->add_option("--output-dir", hs_outdir, "output directory");

  // check-separation
  std::string cs_manifest, cs_snapshots;
  double cs_gap = 1.0;
  CLI::App* cs = app.add_subcommand("check-separation",
                                    "verify the support-separation condition");
  cs->add_option("--manifest", cs_manifest, "truth manifest JSON");
  cs->add_option("--snapshots", cs_snapshots, "snapshot file from fit");
  cs->add_option("--gap", cs_gap, "connectivity gap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (fit->parsed()) {
      RunConfig cfg = load_config(fit_common);
      if (!fit_input.empty()) cfg.input = fit_input;
      if (!fit_outdir.empty()) cfg.output_dir = fit_outdir;
      if (fit_iters >= 0) cfg.iters = fit_iters;
      if (fit_burnin >= 0) cfg.burnin = fit_burnin;
      if (fit_thin >= 0) cfg.thin = fit_thin;
      if (fit_seed >= 0) cfg.seed = (std::uint64_t)fit_seed;
      if (fit_threads >= 0) cfg.threads = fit_threads;
      if (fit_k >= 0) cfg.K = fit_k;
      return cmd_fit(cfg);
    }
    if (sim->parsed()) {
      RunConfig cfg = load_config(sim_common);
      if (!sim_outdir.empty()) cfg.output_dir = sim_outdir;
      return cmd_simulate(sim_design, sim_n, (std::uint64_t)sim_seed, cfg);
    }
    if (sum->parsed()) {
      RunConfig cfg = load_config(sum_common);
      if (!sum_outdir.empty()) cfg.output_dir = sum_outdir;
      if (sum_grid_points > 0) cfg.grid_points = sum_grid_points;
      if (sum_band >= 0.0) cfg.band_level = sum_band;
      if (sum_wlevel >= 0.0) cfg.weight_level = sum_wlevel;
      if (sum_cdf) cfg.cdf = true;
      if (sum_cdf_points > 0) cfg.cdf_points = sum_cdf_points;
      return cmd_summarize(sum_snapshots, sum_data, cfg);
    }
    if (hs->parsed()) {
      RunConfig cfg = load_config(hs_common);
      if (!hs_outdir.empty()) cfg.output_dir = hs_outdir;
      return cmd_hermite_split(hs_data, hs_c1, hs_c2, hs_sigma, hs_halfwidth,
                               hs_ell, hs_epsilon, cfg);
    }
    if (cs->parsed()) {
      return cmd_check_separation(cs_manifest, cs_snapshots, cs_gap);
    }
  } catch (const InvalidArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace npmix
