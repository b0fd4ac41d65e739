// Command-line front end: parse a map, calibrate the mesh, build the blended
// approximant, compute upper/lower bounds, measure critical sets, and emit
// machine-readable reports.
//
// Exit codes: 0 success, 2 config error, 3 numeric-range error, 4 internal
// assertion.  Reports are deterministic for a fixed config and seed.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <critset/adversary.hpp>
#include <critset/decomposition.hpp>
#include <critset/expr.hpp>
#include <critset/measure.hpp>
#include <critset/modulus.hpp>
#include <critset/perturbation.hpp>
#include <critset/polynomial.hpp>

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt_full(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw critset::config_error("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw critset::config_error("cannot write file: " + path);
  out << content;
}

// ---------------------------------------------------------------------------
// Shared run configuration.  Flags override config-file values; the merge
// happens after parsing by filling only the options the user did not pass.

struct RunSetup {
  std::string config_file;

  std::string function_source;
  std::string function_file;
  int dim = 0;
  int range_dim = 0;

  std::string modulus_kind = "holder";  // holder | tabulated | estimate
  double holder_coeff = 1.0;
  double holder_alpha = 1.0;
  std::string modulus_csv;
  int estimate_resolution = 64;

  std::vector<double> epsilons;
  double delta = 0.0;

  int resolution = 256;
  int samples = 20000;
  double sigma_tol = 0.0;  // 0 means the library default
  bool no_mask = false;

  int depth = 6;
  int lines = 0;
  int profile_samples = 4096;
  bool with_adversary = false;

  std::string out_dir;
  std::uint64_t seed = 1;
  std::int64_t export_limit = 200000;
};

// Registers the options shared by the pipeline subcommands and returns the
// option pointers needed for the config-file merge.
struct BoundOptions {
  CLI::Option* function = nullptr;
  CLI::Option* function_file = nullptr;
  CLI::Option* dim = nullptr;
  CLI::Option* range_dim = nullptr;
  CLI::Option* modulus_kind = nullptr;
  CLI::Option* holder_coeff = nullptr;
  CLI::Option* holder_alpha = nullptr;
  CLI::Option* modulus_csv = nullptr;
  CLI::Option* estimate_resolution = nullptr;
  CLI::Option* epsilons = nullptr;
  CLI::Option* delta = nullptr;
  CLI::Option* resolution = nullptr;
  CLI::Option* samples = nullptr;
  CLI::Option* sigma_tol = nullptr;
  CLI::Option* depth = nullptr;
  CLI::Option* lines = nullptr;
  CLI::Option* out_dir = nullptr;
  CLI::Option* seed = nullptr;
};

BoundOptions add_common_options(CLI::App* cmd, RunSetup& rs) {
  BoundOptions o;
  cmd->add_option("--config", rs.config_file, "JSON config file; explicit flags take precedence");
  o.function = cmd->add_option("--function", rs.function_source,
                               "map as semicolon-separated expressions in x1..xd");
  o.function_file = cmd->add_option("--function-file", rs.function_file,
                                    "file holding the map expression");
  o.dim = cmd->add_option("--d", rs.dim, "domain dimension");
  o.range_dim = cmd->add_option("--m", rs.range_dim, "range dimension");
  o.modulus_kind = cmd->add_option("--modulus", rs.modulus_kind,
                                   "modulus kind: holder | tabulated | estimate")
                       ->check(CLI::IsMember({"holder", "tabulated", "estimate"}));
  o.holder_coeff = cmd->add_option("--holder-c", rs.holder_coeff, "Holder coefficient");
  o.holder_alpha = cmd->add_option("--holder-alpha", rs.holder_alpha, "Holder exponent in (0,1]");
  o.modulus_csv = cmd->add_option("--modulus-csv", rs.modulus_csv,
                                  "CSV of delta,omega knots for a tabulated modulus");
  o.estimate_resolution = cmd->add_option("--estimate-resolution", rs.estimate_resolution,
                                          "sample grid per axis for an estimated modulus");
  o.epsilons = cmd->add_option("--epsilon", rs.epsilons, "C1 tolerance(s), repeatable");
  o.delta = cmd->add_option("--delta", rs.delta, "mesh size (bypasses the calibration solve)");
  o.resolution = cmd->add_option("--resolution", rs.resolution, "measurement grid per axis");
  o.samples = cmd->add_option("--samples", rs.samples, "points for certificate verification");
  o.sigma_tol = cmd->add_option("--sigma-tol", rs.sigma_tol,
                                "absolute smallest-singular-value cutoff for the rank mask");
  o.depth = cmd->add_option("--n-max", rs.depth, "oscillation depth of an adversarial profile");
  o.lines = cmd->add_option("--count-lines", rs.lines, "scan lines for sheet counting");
  o.out_dir = cmd->add_option("--out", rs.out_dir, "directory for reports and geometry");
  o.seed = cmd->add_option("--seed", rs.seed, "RNG seed (fixed seed => identical report bytes)");
  return o;
}

// Fills any option the user did not pass from the config file.
void merge_config_file(const RunSetup& parsed, RunSetup& rs, const BoundOptions& o) {
  if (parsed.config_file.empty()) return;
  ordered_json cfg;
  try {
    cfg = ordered_json::parse(read_text_file(parsed.config_file));
  } catch (const nlohmann::json::exception& e) {
    throw critset::config_error(std::string("config file: ") + e.what());
  }
  const auto take = [&](const char* key, auto& slot, const CLI::Option* opt) {
    if (opt != nullptr && opt->count() > 0) return;
    if (!cfg.contains(key)) return;
    try {
      slot = cfg.at(key).get<std::decay_t<decltype(slot)>>();
    } catch (const nlohmann::json::exception& e) {
      throw critset::config_error(std::string("config key '") + key + "': " + e.what());
    }
  };
  take("function", rs.function_source, o.function);
  take("function_file", rs.function_file, o.function_file);
  take("d", rs.dim, o.dim);
  take("m", rs.range_dim, o.range_dim);
  take("modulus", rs.modulus_kind, o.modulus_kind);
  take("holder_c", rs.holder_coeff, o.holder_coeff);
  take("holder_alpha", rs.holder_alpha, o.holder_alpha);
  take("modulus_csv", rs.modulus_csv, o.modulus_csv);
  take("estimate_resolution", rs.estimate_resolution, o.estimate_resolution);
  take("delta", rs.delta, o.delta);
  take("resolution", rs.resolution, o.resolution);
  take("samples", rs.samples, o.samples);
  take("sigma_tol", rs.sigma_tol, o.sigma_tol);
  take("n_max", rs.depth, o.depth);
  take("count_lines", rs.lines, o.lines);
  take("out", rs.out_dir, o.out_dir);
  take("seed", rs.seed, o.seed);
  if ((o.epsilons == nullptr || o.epsilons->count() == 0) && cfg.contains("epsilon")) {
    rs.epsilons.clear();
    const auto& e = cfg.at("epsilon");
    if (e.is_array())
      for (const auto& v : e) rs.epsilons.push_back(v.get<double>());
    else
      rs.epsilons.push_back(e.get<double>());
  }
}

std::string function_text(const RunSetup& rs) {
  if (!rs.function_source.empty()) return rs.function_source;
  if (!rs.function_file.empty()) return read_text_file(rs.function_file);
  throw critset::config_error("no function given: pass --function or --function-file");
}

std::shared_ptr<const critset::FunctionDef> make_function(const RunSetup& rs) {
  if (rs.dim < 1) throw critset::config_error("domain dimension --d must be at least 1");
  auto f = std::make_shared<critset::FunctionDef>(function_text(rs), rs.dim);
  if (rs.range_dim != 0 && rs.range_dim != f->dim_out())
    throw critset::config_error("--m " + std::to_string(rs.range_dim) + " but the function has " +
                                std::to_string(f->dim_out()) + " component(s)");
  return f;
}

critset::Modulus parse_modulus_csv(const std::string& path, double diameter) {
  std::vector<std::pair<double, double>> knots;
  std::istringstream in(read_text_file(path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double s = 0.0, w = 0.0;
    if (!(row >> s >> w))
      throw critset::config_error(path + ":" + std::to_string(lineno) +
                                  ": expected 'delta,omega'");
    knots.emplace_back(s, w);
  }
  return critset::Modulus::tabulated(std::move(knots), diameter);
}

critset::Modulus make_modulus(const RunSetup& rs, const critset::C1Map* f) {
  const int d = rs.dim;
  if (d < 1) throw critset::config_error("domain dimension --d must be at least 1");
  const double diameter = std::sqrt(static_cast<double>(d));
  if (rs.modulus_kind == "holder")
    return critset::Modulus::holder(rs.holder_coeff, rs.holder_alpha, diameter);
  if (rs.modulus_kind == "tabulated") {
    if (rs.modulus_csv.empty())
      throw critset::config_error("tabulated modulus needs --modulus-csv");
    return parse_modulus_csv(rs.modulus_csv, diameter);
  }
  if (f == nullptr)
    throw critset::config_error("an estimated modulus needs a function to sample");
  return critset::estimate_modulus_of_jacobian(*f, rs.estimate_resolution, {}, rs.seed);
}

ordered_json modulus_json(const critset::Modulus& w) {
  ordered_json out;
  if (w.kind() == critset::Modulus::Kind::holder) {
    out["kind"] = "holder";
    out["c"] = w.holder_coeff();
    out["alpha"] = w.holder_alpha();
  } else {
    out["kind"] = "tabulated";
    ordered_json knots = ordered_json::array();
    for (const auto& [s, v] : w.knots()) knots.push_back({s, v});
    out["knots"] = knots;
    out["lower_estimate"] = w.lower_estimate();
    if (w.lower_estimate())
      out["caveat"] =
          "sampled modulus is a lower estimate, so the solved mesh size is an upper estimate";
  }
  out["domain_diameter"] = w.domain_diameter();
  return out;
}

// The effective configuration, hashed into every report so a report can be
// traced back to the exact inputs that produced it.
ordered_json config_json(const std::string& command, const RunSetup& rs) {
  ordered_json cfg;
  cfg["command"] = command;
  if (!rs.function_source.empty() || !rs.function_file.empty())
    cfg["function"] = rs.function_source.empty() ? read_text_file(rs.function_file)
                                                 : rs.function_source;
  cfg["d"] = rs.dim;
  if (rs.range_dim != 0) cfg["m"] = rs.range_dim;
  cfg["modulus"] = rs.modulus_kind;
  if (rs.modulus_kind == "holder") {
    cfg["holder_c"] = rs.holder_coeff;
    cfg["holder_alpha"] = rs.holder_alpha;
  } else if (rs.modulus_kind == "tabulated") {
    cfg["modulus_csv"] = rs.modulus_csv;
  } else {
    cfg["estimate_resolution"] = rs.estimate_resolution;
  }
  if (!rs.epsilons.empty()) cfg["epsilon"] = rs.epsilons;
  if (rs.delta > 0.0) cfg["delta"] = rs.delta;
  cfg["resolution"] = rs.resolution;
  cfg["samples"] = rs.samples;
  if (rs.sigma_tol > 0.0) cfg["sigma_tol"] = rs.sigma_tol;
  cfg["n_max"] = rs.depth;
  if (rs.lines > 0) cfg["count_lines"] = rs.lines;
  cfg["seed"] = rs.seed;
  return cfg;
}

std::string config_hash(const ordered_json& cfg) {
  std::ostringstream os;
  os << "0x" << std::hex << std::setw(16) << std::setfill('0') << critset::fnv1a64(cfg.dump());
  return os.str();
}

void emit_report(const RunSetup& rs, const std::string& name, const ordered_json& report) {
  if (rs.out_dir.empty()) return;
  std::filesystem::create_directories(rs.out_dir);
  write_text_file((std::filesystem::path(rs.out_dir) / name).string(), report.dump(2) + "\n");
  std::cout << "wrote " << (std::filesystem::path(rs.out_dir) / name).string() << "\n";
}

// ---------------------------------------------------------------------------
// decompose

int cmd_decompose(const RunSetup& rs) {
  if (rs.delta <= 0.0) throw critset::config_error("decompose needs --delta > 0");
  const critset::CubeGrid grid(rs.dim, rs.delta);
  const std::int64_t total = grid.simplex_count();
  const double cell = 1.0 / static_cast<double>(grid.cubes_per_axis());

  double volume_sum = 0.0;
  double per_simplex = 0.0;
  for (int k = 0; k < grid.shapes_per_cube(); ++k) {
    per_simplex = grid.simplex(0, k).volume();
    volume_sum += per_simplex * static_cast<double>(grid.cube_count());
  }

  std::cout << "d = " << rs.dim << ", requested delta = " << rs.delta << "\n"
            << "cubes per axis: " << grid.cubes_per_axis() << " (cell width " << cell << ")\n"
            << "simplices: " << total << " (" << grid.cube_count() << " cubes x "
            << grid.shapes_per_cube() << " shapes)\n"
            << "per-simplex volume: " << fmt_full(per_simplex) << "\n"
            << "total volume: " << fmt_full(volume_sum) << "\n";

  ordered_json cfg = config_json("decompose", rs);
  ordered_json report;
  report["config_hash"] = config_hash(cfg);
  report["config"] = cfg;
  report["d"] = rs.dim;
  report["delta_requested"] = rs.delta;
  report["cubes_per_axis"] = grid.cubes_per_axis();
  report["cell_width"] = cell;
  report["shapes_per_cube"] = grid.shapes_per_cube();
  report["simplex_count"] = total;
  report["per_simplex_volume"] = per_simplex;
  report["total_volume"] = volume_sum;
  if (total <= rs.export_limit) {
    ordered_json arr = ordered_json::array();
    for (std::int64_t iota = 0; iota < grid.cube_count(); ++iota) {
      for (int k = 0; k < grid.shapes_per_cube(); ++k) {
        const critset::Simplex sx = grid.simplex(iota, k);
        ordered_json item;
        item["cube"] = iota;
        item["shape"] = k;
        ordered_json verts = ordered_json::array();
        for (const critset::Vec& v : sx.vertices) verts.push_back(v);
        item["vertices"] = verts;
        item["volume"] = sx.volume();
        arr.push_back(std::move(item));
      }
    }
    report["simplices"] = std::move(arr);
  } else {
    report["simplices_omitted"] = "simplex count exceeds the export limit";
  }
  emit_report(rs, "simplices.json", report);
  return 0;
}

// ---------------------------------------------------------------------------
// bound

int cmd_bound(const RunSetup& rs) {
  if (rs.epsilons.empty()) throw critset::config_error("bound needs at least one --epsilon");
  std::shared_ptr<const critset::FunctionDef> f;
  if (rs.modulus_kind == "estimate") f = make_function(rs);
  const critset::Modulus w = make_modulus(rs, f.get());
  const int m = rs.range_dim > 0 ? rs.range_dim : 1;
  if (m < 1 || m > rs.dim) throw critset::config_error("bound needs 1 <= m <= d");

  ordered_json cfg = config_json("bound", rs);
  ordered_json rows = ordered_json::array();

  std::printf("%-14s %-14s %-14s %-14s %-14s", "epsilon", "delta", "upper", "remark", "holder");
  if (rs.with_adversary) std::printf(" %-14s %-10s", "lower", "count");
  std::printf("\n");

  int ok_rows = 0;
  for (double eps : rs.epsilons) {
    ordered_json row;
    row["epsilon"] = eps;
    try {
      const critset::UpperBound ub = critset::upper_bound_N(rs.dim, m, eps, w);
      row["delta"] = ub.delta;
      row["theorem_form"] = ub.theorem_form;
      if (ub.remark_form) row["remark_form"] = *ub.remark_form;
      if (ub.holder_form) row["holder_form"] = *ub.holder_form;
      std::printf("%-14.6g %-14.6g %-14.6g ", eps, ub.delta, ub.theorem_form);
      if (ub.remark_form)
        std::printf("%-14.6g ", *ub.remark_form);
      else
        std::printf("%-14s ", "-");
      if (ub.holder_form)
        std::printf("%-14.6g", *ub.holder_form);
      else
        std::printf("%-14s", "-");
      if (rs.with_adversary) {
        // A tolerance can sit above the certificate's cutoff while the upper
        // bound is still fine; report that per row instead of failing it.
        try {
          const critset::OscillatoryFunction prof(w, rs.dim, m, rs.depth);
          const critset::LowerBoundCertificate cert = critset::lower_bound_N(prof, eps);
          ordered_json lower;
          lower["gamma"] = cert.gamma;
          lower["psi_gamma_eps"] = cert.psi_gamma_eps;
          lower["n0"] = cert.n0;
          lower["count_bound"] = cert.count_bound;
          lower["formula_bound"] = cert.formula_bound;
          row["lower"] = lower;
          std::printf(" %-14.6g %-10lld", cert.formula_bound,
                      static_cast<long long>(cert.count_bound));
        } catch (const critset::range_error& e) {
          row["lower"] = ordered_json{{"error", e.what()}};
          std::printf(" %-14s %-10s (%s)", "-", "-", e.what());
        }
      }
      std::printf("\n");
      ++ok_rows;
    } catch (const critset::range_error& e) {
      row["error"] = e.what();
      std::printf("%-14.6g out of range: %s\n", eps, e.what());
    }
    rows.push_back(std::move(row));
  }

  ordered_json report;
  report["config_hash"] = config_hash(cfg);
  report["config"] = cfg;
  report["tolerances"] = {{"solve_tol_rel", 1e-10}};
  report["modulus"] = modulus_json(w);
  report["rows"] = std::move(rows);
  emit_report(rs, "bound_report.json", report);
  return ok_rows > 0 ? 0 : 3;
}

// ---------------------------------------------------------------------------
// perturb / measure share the build step.

critset::BlendedApproximant build_from_setup(const RunSetup& rs,
                                             std::shared_ptr<const critset::FunctionDef> f,
                                             const critset::Modulus& w) {
  const bool has_eps = !rs.epsilons.empty();
  const bool has_delta = rs.delta > 0.0;
  if (has_eps == has_delta)
    throw critset::config_error("pass exactly one of --epsilon or --delta");
  if (has_eps) {
    if (rs.epsilons.size() != 1)
      throw critset::config_error("this command takes a single --epsilon");
    return critset::build_approximant(std::move(f), rs.epsilons[0], w);
  }
  return critset::build_approximant_at_delta(std::move(f), rs.delta, w);
}

std::string poly_terms_string(const critset::Poly& p) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [key, coeff] : p.terms()) {
    if (!first) os << ';';
    first = false;
    for (int v = 0; v < 8; ++v) {
      const int e = critset::Poly::key_exponent(key, v);
      if (e > 0) os << 'x' << (v + 1) << '^' << e << '.';
    }
    os << std::setprecision(17) << coeff;
  }
  return os.str();
}

const char* kind_name(critset::CriticalPolynomial::Kind k) {
  using Kind = critset::CriticalPolynomial::Kind;
  switch (k) {
    case Kind::regular: return "regular";
    case Kind::flat_noncritical: return "flat_noncritical";
    case Kind::flat_critical: return "flat_critical";
    default: return "indeterminate";
  }
}

void export_approximant(const RunSetup& rs, const critset::BlendedApproximant& g) {
  if (rs.out_dir.empty()) return;
  const std::filesystem::path dir(rs.out_dir);
  std::filesystem::create_directories(dir);

  if (static_cast<std::int64_t>(g.vertex_count()) > rs.export_limit) {
    std::cout << "vertex table skipped: " << g.vertex_count() << " vertices exceed the export limit\n";
    return;
  }
  {
    std::ofstream out(dir / "vertices.csv");
    out << std::setprecision(17);
    out << "# position[d], value[m], jacobian row-major[m*d]\n";
    const int d = g.dim_in(), m = g.dim_out();
    for (std::size_t i = 0; i < g.vertex_count(); ++i) {
      const auto& rec = g.vertex(i);
      for (int a = 0; a < d; ++a) out << rec.position[static_cast<std::size_t>(a)] << ',';
      for (int c = 0; c < m; ++c) out << rec.value[static_cast<std::size_t>(c)] << ',';
      for (int c = 0; c < m; ++c)
        for (int a = 0; a < d; ++a)
          out << rec.jacobian(c, a) << (c == m - 1 && a == d - 1 ? '\n' : ',');
    }
  }
  if (g.grid().simplex_count() <= rs.export_limit) {
    std::ofstream out(dir / "critical_polynomials.csv");
    out << std::setprecision(17);
    out << "# polynomial variables live in the local frame xi = (x - apex) / ell\n";
    out << "cube,shape,kind,gauge,degree_bound,ell,terms\n";
    for (std::int64_t iota = 0; iota < g.grid().cube_count(); ++iota) {
      for (int k = 0; k < g.grid().shapes_per_cube(); ++k) {
        const critset::CriticalPolynomial cp = g.critical_polynomial(iota, k);
        out << iota << ',' << k << ',' << kind_name(cp.kind) << ',' << cp.gauge << ','
            << cp.degree_bound << ',' << cp.ell << ',' << '"' << poly_terms_string(cp.p) << '"'
            << '\n';
      }
    }
  }
  std::cout << "wrote " << (dir / "vertices.csv").string() << "\n";
}

int cmd_perturb(const RunSetup& rs) {
  auto f = make_function(rs);
  const critset::Modulus w = make_modulus(rs, f.get());
  const critset::BlendedApproximant g = build_from_setup(rs, f, w);
  const critset::C1Distance dist = critset::verify_c1_distance(*f, g, rs.samples, rs.seed);

  std::cout << "mesh: K = " << g.grid().cubes_per_axis() << " per axis (delta target "
            << g.delta() << "), " << g.grid().simplex_count() << " simplices, "
            << g.vertex_count() << " vertices\n";
  if (g.epsilon() > 0.0) std::cout << "epsilon requested: " << g.epsilon() << "\n";
  std::cout << "certified C1 bound: " << fmt_full(g.c1_bound()) << "\n"
            << "measured sup |g-f|: " << fmt_full(dist.sup_value) << "\n"
            << "measured sup |Dg-Df|: " << fmt_full(dist.sup_jacobian) << "\n";
  if (g.critical_set_free()) std::cout << "flag: critical-set-free\n";

  ordered_json cfg = config_json("perturb", rs);
  ordered_json report;
  report["config_hash"] = config_hash(cfg);
  report["config"] = cfg;
  report["tolerances"] = {{"solve_tol_rel", 1e-10}, {"samples", rs.samples}};
  report["modulus"] = modulus_json(w);
  report["d"] = g.dim_in();
  report["m"] = g.dim_out();
  report["cubes_per_axis"] = g.grid().cubes_per_axis();
  report["delta"] = g.delta();
  if (g.epsilon() > 0.0) report["epsilon"] = g.epsilon();
  report["simplex_count"] = g.grid().simplex_count();
  report["vertex_count"] = g.vertex_count();
  report["c1_bound"] = g.c1_bound();
  report["measured"] = {{"sup_value", dist.sup_value}, {"sup_jacobian", dist.sup_jacobian}};
  report["certificate_holds"] = dist.sup_value <= g.c1_bound() && dist.sup_jacobian <= g.c1_bound();
  report["critical_set_free"] = g.critical_set_free();
  emit_report(rs, "approximant.json", report);
  export_approximant(rs, g);
  return 0;
}

// ---------------------------------------------------------------------------
// measure

void export_geometry(const RunSetup& rs, int d, const critset::GeometryCollector& geo) {
  if (rs.out_dir.empty()) return;
  const std::filesystem::path dir(rs.out_dir);
  std::filesystem::create_directories(dir);
  if (d == 1) {
    std::ofstream out(dir / "points.csv");
    out << std::setprecision(17) << "x\n";
    for (double x : geo.points) out << x << '\n';
    std::cout << "wrote " << (dir / "points.csv").string() << " (" << geo.points.size()
              << " points)\n";
  } else if (d == 2) {
    std::ofstream out(dir / "segments.csv");
    out << std::setprecision(17) << "x0,y0,x1,y1\n";
    for (const auto& s : geo.segments)
      out << s[0] << ',' << s[1] << ',' << s[3] << ',' << s[4] << '\n';
    std::cout << "wrote " << (dir / "segments.csv").string() << " (" << geo.segments.size()
              << " segments)\n";
  } else {
    std::ofstream out(dir / "triangles.csv");
    out << std::setprecision(17) << "x0,y0,z0,x1,y1,z1,x2,y2,z2\n";
    for (const auto& t : geo.triangles) {
      for (std::size_t i = 0; i < 9; ++i) out << t[i] << (i == 8 ? '\n' : ',');
    }
    std::cout << "wrote " << (dir / "triangles.csv").string() << " (" << geo.triangles.size()
              << " triangles)\n";
  }
}

int cmd_measure(const RunSetup& rs) {
  auto f = make_function(rs);
  const critset::Modulus w = make_modulus(rs, f.get());
  const critset::BlendedApproximant g = build_from_setup(rs, f, w);
  const critset::C1Distance dist = critset::verify_c1_distance(*f, g, rs.samples, rs.seed);

  ordered_json cfg = config_json("measure", rs);
  ordered_json report;
  report["config_hash"] = config_hash(cfg);
  report["config"] = cfg;
  ordered_json tolerances = {{"solve_tol_rel", 1e-10}, {"samples", rs.samples}};
  tolerances["sigma_tol"] =
      rs.sigma_tol > 0.0 ? ordered_json(rs.sigma_tol)
                         : ordered_json("max(1, |Dg|_F) / resolution");
  report["tolerances"] = tolerances;
  report["modulus"] = modulus_json(w);
  report["d"] = g.dim_in();
  report["m"] = g.dim_out();
  report["cubes_per_axis"] = g.grid().cubes_per_axis();
  report["delta"] = g.delta();
  report["c1_bound"] = g.c1_bound();
  report["measured_c1"] = {{"sup_value", dist.sup_value}, {"sup_jacobian", dist.sup_jacobian}};
  report["critical_set_free"] = g.critical_set_free();

  std::cout << "mesh: K = " << g.grid().cubes_per_axis() << ", delta target " << g.delta()
            << ", certified C1 bound " << g.c1_bound() << "\n";
  if (g.critical_set_free()) std::cout << "flag: critical-set-free\n";

  const double eps_for_bound = g.epsilon() > 0.0 ? g.epsilon() : g.c1_bound();
  try {
    const critset::UpperBound ub =
        critset::upper_bound_N(g.dim_in(), g.dim_out(), eps_for_bound, w);
    ordered_json bounds;
    bounds["epsilon"] = eps_for_bound;
    bounds["delta"] = ub.delta;
    bounds["theorem_form"] = ub.theorem_form;
    if (ub.remark_form) bounds["remark_form"] = *ub.remark_form;
    if (ub.holder_form) bounds["holder_form"] = *ub.holder_form;
    report["upper_bound"] = bounds;
    std::cout << "upper bound at epsilon " << eps_for_bound << ": " << ub.theorem_form << "\n";
  } catch (const critset::range_error& e) {
    report["upper_bound"] = {{"error", e.what()}};
    std::cout << "upper bound unavailable: " << e.what() << "\n";
  }

  if (g.dim_in() > 3) {
    report["warnings"] = ordered_json::array({"measure unsupported for d>3"});
    std::cout << "measure unsupported for d>3; bounds emitted\n";
    emit_report(rs, "measure_report.json", report);
    return 0;
  }

  critset::MeasureOptions opts;
  if (rs.sigma_tol > 0.0) opts.sigma_tol_abs = rs.sigma_tol;
  opts.apply_mask = !rs.no_mask;
  critset::GeometryCollector geo;
  const critset::CriticalSetMeasure msr =
      critset::measure_critical_set(g, rs.resolution, opts, &geo);

  ordered_json mj;
  mj["value"] = msr.estimate.value;
  mj["uncertainty"] = msr.estimate.uncertainty;
  mj["method"] = msr.estimate.method;
  mj["resolution"] = msr.estimate.resolution;
  mj["simplex_count"] = msr.simplex_count;
  mj["flat_critical"] = msr.flat_critical;
  mj["indeterminate"] = msr.indeterminate;
  mj["finite"] = msr.finite;
  report["measure"] = mj;
  if (report.contains("upper_bound") && report["upper_bound"].contains("theorem_form") &&
      msr.finite) {
    const double bound = report["upper_bound"]["theorem_form"].get<double>();
    if (bound > 0.0) report["measured_over_bound"] = msr.estimate.value / bound;
  }

  std::cout << "measured H^" << (g.dim_in() - 1) << "(critical set): " << msr.estimate.value
            << " +/- " << msr.estimate.uncertainty << " (" << msr.estimate.method
            << " at resolution " << msr.estimate.resolution << ")\n";
  if (!msr.finite)
    std::cout << "note: " << msr.flat_critical
              << " simplices are entirely critical; the (d-1)-measure is infinite there\n";
  if (report.contains("measured_over_bound"))
    std::cout << "measured / bound = " << report["measured_over_bound"].get<double>() << "\n";

  emit_report(rs, "measure_report.json", report);
  export_geometry(rs, g.dim_in(), geo);
  return 0;
}

// ---------------------------------------------------------------------------
// adversary

int cmd_adversary(const RunSetup& rs) {
  const int m = rs.range_dim > 0 ? rs.range_dim : 1;
  if (rs.dim < 1) throw critset::config_error("adversary needs --d");
  const critset::Modulus w = make_modulus(rs, nullptr);
  const auto prof =
      std::make_shared<critset::OscillatoryFunction>(w, rs.dim, m, rs.depth);

  ordered_json cfg = config_json("adversary", rs);
  ordered_json report;
  report["config_hash"] = config_hash(cfg);
  report["config"] = cfg;
  report["modulus"] = modulus_json(w);
  report["d"] = rs.dim;
  report["m"] = m;
  report["n_max"] = rs.depth;

  if (rs.epsilons.empty()) throw critset::config_error("adversary needs --epsilon");
  if (rs.epsilons.size() != 1)
    throw critset::config_error("adversary takes a single --epsilon");
  const double eps = rs.epsilons[0];

  const critset::LowerBoundCertificate cert = critset::lower_bound_N(*prof, eps);
  ordered_json cj;
  cj["epsilon"] = cert.epsilon;
  cj["gamma"] = cert.gamma;
  cj["psi_gamma_eps"] = cert.psi_gamma_eps;
  cj["n0"] = cert.n0;
  cj["count_bound"] = cert.count_bound;
  cj["formula_bound"] = cert.formula_bound;
  cj["eps_cutoff_profile"] = cert.eps_cutoff_profile;
  cj["eps_cutoff_dim"] = cert.eps_cutoff_dim;
  report["certificate"] = cj;

  std::cout << "epsilon " << eps << " admits depth n0 = " << cert.n0 << "\n"
            << "gamma = " << cert.gamma << ", inverse modulus at gamma*eps = "
            << cert.psi_gamma_eps << "\n"
            << "certified critical-point count >= " << cert.count_bound
            << " (closed form >= " << cert.formula_bound << ")\n";

  if (rs.lines > 0) {
    const critset::AdversarialMap f(prof);
    const critset::SheetCount sc =
        critset::count_critical_sheets(f, *prof, eps, rs.lines, rs.seed);
    ordered_json sj;
    sj["detected"] = sc.detected;
    sj["spans_checked"] = sc.spans_checked;
    sj["spans_total"] = sc.spans_total;
    sj["exhaustive"] = sc.exhaustive;
    report["sheets"] = sj;
    std::cout << "sheets detected on the construction itself: " << sc.detected << " of "
              << sc.spans_total << (sc.exhaustive ? " (exhaustive)" : " (sampled)") << "\n";
  }

  emit_report(rs, "certificate.json", report);

  if (rs.profile_samples > 0 && !rs.out_dir.empty()) {
    const std::filesystem::path dir(rs.out_dir);
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "profile.csv");
    out << std::setprecision(17) << "s,beta,antiderivative\n";
    for (int i = 0; i <= rs.profile_samples; ++i) {
      const double s = static_cast<double>(i) / rs.profile_samples;
      out << s << ',' << prof->beta(s) << ',' << prof->beta_integral(s) << '\n';
    }
    std::cout << "wrote " << (dir / "profile.csv").string() << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// selftest

int cmd_selftest(const RunSetup& rs) {
  struct Property {
    const char* name;
    bool (*check)(std::uint64_t seed);
  };

  const Property props[] = {
      {"decomposition counts and volumes",
       [](std::uint64_t) {
         const int expected[] = {1, 4, 24};
         for (int d = 1; d <= 3; ++d) {
           const critset::CubeGrid grid(d, 1.0);
           if (grid.simplex_count() != expected[d - 1]) return false;
           double vol = 0.0;
           for (int k = 0; k < grid.shapes_per_cube(); ++k) vol += grid.simplex(0, k).volume();
           if (std::abs(vol - 1.0) > 1e-12) return false;
         }
         return true;
       }},
      {"every point lies in exactly one simplex",
       [](std::uint64_t seed) {
         const critset::CubeGrid grid(2, 0.5);
         std::mt19937_64 rng(seed);
         std::uniform_real_distribution<double> uni(0.0, 1.0);
         for (int i = 0; i < 20000; ++i) {
           const critset::Vec x{uni(rng), uni(rng)};
           int hits = 0;
           for (std::int64_t iota = 0; iota < grid.cube_count(); ++iota)
             for (int k = 0; k < grid.shapes_per_cube(); ++k)
               if (critset::barycentric(grid.simplex(iota, k), x).contains(1e-12)) ++hits;
           if (hits < 1) return false;
           const auto loc = grid.locate(x);
           if (!critset::barycentric(grid.simplex(loc.cube, loc.shape), x).contains(1e-9))
             return false;
         }
         return true;
       }},
      {"blending weights form a partition of unity",
       [](std::uint64_t seed) {
         const critset::CubeGrid grid(2, 0.34);
         std::mt19937_64 rng(seed + 1);
         std::uniform_real_distribution<double> uni(0.0, 1.0);
         for (int i = 0; i < 500; ++i) {
           const critset::Vec x{uni(rng), uni(rng)};
           const auto loc = grid.locate(x);
           const critset::BlendWeights wts = critset::blend_weights(loc.bc);
           double sum = 0.0;
           for (double b : wts.beta) sum += b;
           if (std::abs(sum - 1.0) > 1e-12) return false;
           for (int c = 0; c < wts.dbeta.cols; ++c) {
             double col = 0.0;
             for (int j = 0; j < wts.dbeta.rows; ++j) col += wts.dbeta(j, c);
             if (std::abs(col) > 1e-10) return false;
           }
         }
         return true;
       }},
      {"approximant reproduces values and jacobians at vertices",
       [](std::uint64_t) {
         const auto f = std::make_shared<critset::FunctionDef>("sin(3*x1)*cos(3*x2)", 2);
         const critset::BlendedApproximant g = critset::build_approximant_at_delta(f, 0.25);
         for (std::size_t i = 0; i < g.vertex_count(); ++i) {
           const auto& rec = g.vertex(i);
           const auto [gv, gj] = g.value_and_jacobian(rec.position);
           for (std::size_t c = 0; c < gv.size(); ++c)
             if (gv[c] != rec.value[c]) return false;
           for (int r = 0; r < gj.rows; ++r)
             for (int c = 0; c < gj.cols; ++c)
               if (std::abs(gj(r, c) - rec.jacobian(r, c)) > 1e-9) return false;
         }
         return true;
       }},
      {"dense sampling stays below the certified C1 bound",
       [](std::uint64_t seed) {
         const auto f = std::make_shared<critset::FunctionDef>("sin(3*x1)*cos(3*x2)", 2);
         const critset::Modulus w = critset::Modulus::holder(20.0, 1.0, 2.0);
         const critset::BlendedApproximant g = critset::build_approximant_at_delta(f, 0.25, w);
         const critset::C1Distance dist = critset::verify_c1_distance(*f, g, 2000, seed);
         return dist.max() <= g.c1_bound();
       }},
      {"calibration solve inverts the mesh equation",
       [](std::uint64_t) {
         const critset::Modulus w = critset::Modulus::holder(2.0, 0.7, std::sqrt(2.0));
         const critset::BetaCalibration cal(2, w);
         for (double eps : {1e-3, 1e-2, 0.1, 1.0}) {
           const critset::SolveResult sr = cal.solve_delta(eps);
           if (sr.critical_set_free) return false;
           if (cal.beta(sr.delta) > eps * (1.0 + 1e-9)) return false;
         }
         return true;
       }},
      {"modulus inverse is consistent with evaluation",
       [](std::uint64_t) {
         const critset::Modulus w =
             critset::Modulus::tabulated({{0.1, 0.05}, {0.6, 0.5}, {1.0, 0.8}}, std::sqrt(2.0));
         for (double s : {0.01, 0.04, 0.3, 0.5, 0.79}) {
           const double t = w.inverse(s);
           if (t > 0.0 && w.eval(t) > s * (1.0 + 1e-12) + 1e-15) return false;
         }
         return true;
       }},
      {"symbolic determinant matches numeric evaluation",
       [](std::uint64_t seed) {
         std::mt19937_64 rng(seed + 7);
         std::uniform_real_distribution<double> uni(-1.0, 1.0);
         std::vector<std::vector<critset::Poly>> mat(3, std::vector<critset::Poly>(3));
         for (int i = 0; i < 3; ++i)
           for (int j = 0; j < 3; ++j) {
             critset::Poly p = critset::Poly::constant(3, uni(rng));
             for (int v = 0; v < 3; ++v) {
               critset::Poly term = critset::Poly::variable(3, v);
               term.scale(uni(rng));
               p += term;
             }
             mat[i][j] = p;
           }
         const critset::Poly dp = critset::poly_det(mat);
         for (int t = 0; t < 50; ++t) {
           const critset::Vec x{uni(rng), uni(rng), uni(rng)};
           critset::Mat num(3, 3);
           for (int i = 0; i < 3; ++i)
             for (int j = 0; j < 3; ++j) num(i, j) = mat[i][j].eval(x);
           if (std::abs(dp.eval(x) - critset::det(num)) > 1e-9) return false;
         }
         return true;
       }},
      {"circle length comes out to 2 pi r",
       [](std::uint64_t) {
         const auto est = critset::zero_set_measure(
             [](const critset::Vec& x) {
               const double dx = x[0] - 0.5, dy = x[1] - 0.5;
               return dx * dx + dy * dy - 0.16;
             },
             2, 128);
         return std::abs(est.value - 2.0 * std::numbers::pi * 0.4) < 0.05;
       }},
      {"critical sheets of a parabola fill the derivative band",
       [](std::uint64_t) {
         // The measured set is a bundle of sheets around {x1 = 1/2}; every
         // horizontal transect crosses it, so its length is at least 1, and
         // it stays inside |x1 - 1/2| <= sup|d g1/d x1 - (x1 - 1/2)|.
         const auto f = std::make_shared<critset::FunctionDef>("x1^2/2 - x1/2; x2", 2);
         const critset::BlendedApproximant g = critset::build_approximant_at_delta(f, 0.25);
         critset::GeometryCollector geo;
         const auto msr = critset::measure_critical_set(g, 64, {}, &geo);
         if (!msr.finite || msr.estimate.value < 0.98 || geo.segments.empty()) return false;
         double eta = 0.0;
         for (int i = 0; i <= 100; ++i)
           for (int j = 0; j <= 100; ++j) {
             const critset::Vec x = {i / 100.0, j / 100.0};
             eta = std::max(eta, std::abs(g.value_and_jacobian(x).second(0, 0) - (x[0] - 0.5)));
           }
         for (const auto& s : geo.segments)
           if (std::abs(s[0] - 0.5) > eta + 0.02 || std::abs(s[3] - 0.5) > eta + 0.02) return false;
         return true;
       }},
      {"adversarial certificate reproduces its frozen example",
       [](std::uint64_t) {
         const critset::OscillatoryFunction prof(critset::Modulus::holder(1.0, 1.0, 1.0), 1, 1, 6);
         const auto cert = critset::lower_bound_N(prof, std::ldexp(1.0, -10));
         return cert.n0 == 2 && cert.count_bound == 18 &&
                cert.psi_gamma_eps == std::ldexp(1.0, -9) && cert.formula_bound == 0.5;
       }},
      {"adversarial jacobian determinant equals the profile",
       [](std::uint64_t seed) {
         const auto prof = std::make_shared<critset::OscillatoryFunction>(
             critset::Modulus::holder(1.0, 1.0, std::sqrt(2.0)), 2, 1, 6);
         const critset::AdversarialMap f(prof);
         std::mt19937_64 rng(seed + 9);
         std::uniform_real_distribution<double> uni(0.0, 1.0);
         for (int i = 0; i < 10000; ++i) {
           const critset::Vec x{uni(rng), uni(rng)};
           if (critset::leading_block_det(f.jacobian(x), 1) != prof->beta(x[0])) return false;
         }
         return true;
       }},
      {"sheet scan finds every certified span",
       [](std::uint64_t seed) {
         const auto prof = std::make_shared<critset::OscillatoryFunction>(
             critset::Modulus::holder(1.0, 1.0, 1.0), 1, 1, 6);
         const critset::AdversarialMap f(prof);
         const auto sc = critset::count_critical_sheets(f, *prof, std::ldexp(1.0, -10), 1, seed);
         return sc.exhaustive && sc.detected == 19;
       }},
  };

  int failures = 0;
  for (const Property& p : props) {
    bool ok = false;
    std::string note;
    try {
      ok = p.check(rs.seed);
    } catch (const std::exception& e) {
      ok = false;
      note = std::string(" (") + e.what() + ")";
    }
    std::cout << (ok ? "PASS  " : "FAIL  ") << p.name << note << "\n";
    if (!ok) ++failures;
  }
  std::cout << (failures == 0 ? "all properties pass" : "some properties FAILED") << "\n";
  return failures == 0 ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"critical-set bounds: decompose, perturb, measure, certify"};
  app.require_subcommand(1);

  RunSetup rs;
  CLI::App* sub_decompose = app.add_subcommand("decompose", "simplicial mesh of the unit cube");
  CLI::App* sub_bound = app.add_subcommand("bound", "upper/lower bound table over epsilon");
  CLI::App* sub_perturb = app.add_subcommand("perturb", "build and certify the approximant");
  CLI::App* sub_measure = app.add_subcommand("measure", "measure the approximant's critical set");
  CLI::App* sub_adversary = app.add_subcommand("adversary", "oscillatory lower-bound certificate");
  CLI::App* sub_selftest = app.add_subcommand("selftest", "run the invariant suite");

  BoundOptions od = add_common_options(sub_decompose, rs);
  BoundOptions ob = add_common_options(sub_bound, rs);
  sub_bound->add_flag("--adversary", rs.with_adversary, "include the lower-bound certificate");
  BoundOptions op = add_common_options(sub_perturb, rs);
  BoundOptions om = add_common_options(sub_measure, rs);
  sub_measure->add_flag("--no-mask", rs.no_mask, "skip the rank-deficiency mask");
  BoundOptions oa = add_common_options(sub_adversary, rs);
  sub_adversary->add_option("--profile-samples", rs.profile_samples,
                            "sample count for the profile CSV export (0 disables)");
  BoundOptions os_ = add_common_options(sub_selftest, rs);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sub_decompose->parsed()) {
      merge_config_file(rs, rs, od);
      return cmd_decompose(rs);
    }
    if (sub_bound->parsed()) {
      merge_config_file(rs, rs, ob);
      return cmd_bound(rs);
    }
    if (sub_perturb->parsed()) {
      merge_config_file(rs, rs, op);
      return cmd_perturb(rs);
    }
    if (sub_measure->parsed()) {
      merge_config_file(rs, rs, om);
      return cmd_measure(rs);
    }
    if (sub_adversary->parsed()) {
      merge_config_file(rs, rs, oa);
      return cmd_adversary(rs);
    }
    merge_config_file(rs, rs, os_);
    return cmd_selftest(rs);
  } catch (const critset::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const critset::parse_error& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const critset::range_error& e) {
    std::cerr << "range error: " << e.what() << "\n";
    return 3;
  } catch (const critset::eval_error& e) {
    std::cerr << "evaluation error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }
}
