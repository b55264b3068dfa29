#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "postcon/equipartition.hpp"
#include "postcon/experiment.hpp"

namespace postcon {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CsvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw CsvError("missing column '" + name + "'");
  }
};

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

CsvTable read_csv_unchecked(const fs::path& path, const std::vector<std::string>& numeric) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw CsvError("line 1: empty file");
  t.header = split_line(line);
  std::vector<std::size_t> cols;
  for (const auto& n : numeric) cols.push_back(t.column(n));
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != t.header.size())
      throw CsvError("line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                     " fields, found " + std::to_string(cells.size()));
    for (std::size_t c : cols) {
      const std::string& s = cells[c];
      char* end = nullptr;
      std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size())
        throw CsvError("line " + std::to_string(lineno) + ": column '" + t.header[c] + "' is not a number: '" + s +
                       "'");
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

// Reads a CSV and checks that the named columns hold numbers on every row.
CsvTable read_csv(const fs::path& path, const std::vector<std::string>& numeric) {
  try {
    return read_csv_unchecked(path, numeric);
  } catch (const CsvError& e) {
    throw CsvError(path.filename().string() + ": " + e.what());
  }
}

double num(const std::string& s) { return std::strtod(s.c_str(), nullptr); }

std::string fmt(double v, int digits = 6) {
  if (!std::isfinite(v)) return "n/a";
  std::ostringstream o;
  o.precision(digits);
  o << v;
  return o.str();
}

std::string table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream o;
  o << '|';
  for (const auto& h : header) o << ' ' << h << " |";
  o << "\n|";
  for (std::size_t i = 0; i < header.size(); ++i) o << "---|";
  o << '\n';
  for (const auto& r : rows) {
    o << '|';
    for (const auto& c : r) o << ' ' << c << " |";
    o << '\n';
  }
  return o.str();
}

std::optional<json> read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) return std::nullopt;
  try {
    return json::parse(in);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::string kl_section(const fs::path& dir) {
  const auto t = read_csv(dir / "kl_rate.csv", {"h", "err", "oracle", "oracle_err"});
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : t.rows) {
    const double h = num(r[t.column("h")]), o = num(r[t.column("oracle")]);
    rows.push_back({r[t.column("model")], r[t.column("theta")], fmt(h), fmt(num(r[t.column("err")]), 3), fmt(o),
                    fmt(std::abs(h - o), 3)});
  }
  return table({"model", "theta", "h", "err", "brute force", "abs diff"}, rows);
}

std::string equipartition_section(const fs::path& dir) {
  const auto t = read_csv(dir / "equipartition_trace.csv", {"n", "replicate", "deviation"});
  std::map<long long, std::vector<double>> by_n;
  for (const auto& r : t.rows) by_n[std::llround(num(r[t.column("n")]))].push_back(num(r[t.column("deviation")]));
  std::vector<std::vector<std::string>> rows;
  for (const auto& [n, devs] : by_n) {
    std::vector<double> a;
    double mean = 0.0;
    for (double d : devs) {
      a.push_back(std::abs(d));
      mean += d / static_cast<double>(devs.size());
    }
    rows.push_back({std::to_string(n), std::to_string(devs.size()), fmt(median(a)), fmt(mean)});
  }
  std::string out = table({"n", "replicates", "median abs deviation", "mean deviation"}, rows);
  if (auto s = read_json(dir / "equipartition_summary.json"); s && s->contains("loglog_slope"))
    out += "\nLog-log slope of the median absolute deviation: " +
           ((*s)["loglog_slope"].is_number() ? fmt((*s)["loglog_slope"].get<double>()) : std::string("n/a")) + "\n";
  return out;
}

std::string sieve_section(const fs::path& dir) {
  const auto t = read_csv(dir / "sieve_mass.csv", {"n", "prob", "ci_lo", "ci_hi", "bound"});
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : t.rows)
    rows.push_back({r[t.column("n")], fmt(num(r[t.column("prob")])),
                    "[" + fmt(num(r[t.column("ci_lo")]), 3) + ", " + fmt(num(r[t.column("ci_hi")]), 3) + "]",
                    fmt(num(r[t.column("bound")]))});
  return table({"n", "P(G_n^c)", "95% CI", "exp(-beta n)"}, rows);
}

std::string posterior_mass_section(const fs::path& dir) {
  const auto t = read_csv(dir / "posterior_summary.csv", {"n", "epsilon", "prob_n_eps", "mean_h"});
  std::map<long long, std::pair<std::vector<double>, std::vector<double>>> by_n;
  std::map<long long, double> eps;
  for (const auto& r : t.rows) {
    const long long n = std::llround(num(r[t.column("n")]));
    by_n[n].first.push_back(num(r[t.column("prob_n_eps")]));
    by_n[n].second.push_back(num(r[t.column("mean_h")]));
    eps[n] = num(r[t.column("epsilon")]);
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& [n, v] : by_n)
    rows.push_back({std::to_string(n), fmt(eps[n]), fmt(median(v.first)), fmt(median(v.second))});
  return table({"n", "eps_n", "median pi(N_eps_n | Y_n)", "median posterior mean h"}, rows);
}

std::string rate_section(const fs::path& dir) {
  const auto t = read_csv(dir / "posterior_summary.csv", {"n", "prob_a", "ess_a"});
  const auto rt = read_csv(dir / "posterior_rate.csv", {"replicate"});
  double j = std::numeric_limits<double>::quiet_NaN();
  std::map<std::string, int> verdicts;
  for (const auto& r : rt.rows) {
    if (!r[rt.column("j")].empty()) j = num(r[rt.column("j")]);
    ++verdicts[r[rt.column("verdict")]];
  }
  std::map<long long, std::vector<double>> probs, ess;
  for (const auto& r : t.rows) {
    const long long n = std::llround(num(r[t.column("n")]));
    probs[n].push_back(num(r[t.column("prob_a")]));
    ess[n].push_back(num(r[t.column("ess_a")]));
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& [n, p] : probs) {
    const double m = median(p);
    const double floor = 1.0 / median(ess[n]);
    const std::string lp = m > floor ? fmt(std::log(m) / static_cast<double>(n)) : std::string("< log(1/ESS)/n");
    rows.push_back({std::to_string(n), fmt(m), lp, fmt(-j)});
  }
  std::string out = table({"n", "median pi(A | Y_n)", "log pi(A | Y_n) / n", "-J(A)"}, rows);
  out += "\nRate verdicts:";
  for (const auto& [v, c] : verdicts) out += " " + v + " x" + std::to_string(c);
  return out + "\n";
}

std::string predictive_section(const fs::path& dir) {
  const auto t = read_csv(dir / "predictive.csv", {"n", "h2", "tv"});
  std::map<std::pair<std::string, long long>, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& r : t.rows) {
    std::string x;
    for (std::size_t c = 2; c + 2 < t.header.size(); ++c) x += (x.empty() ? "" : ", ") + fmt(num(r[c]), 4);
    auto& g = groups[{x, std::llround(num(r[t.column("n")]))}];
    g.first.push_back(num(r[t.column("h2")]));
    g.second.push_back(num(r[t.column("tv")]));
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& [key, v] : groups)
    rows.push_back({key.first, std::to_string(key.second), fmt(median(v.first)), fmt(median(v.second))});
  return table({"x", "n", "median rho_H^2", "median rho_TV"}, rows);
}

std::string bounds_section(const fs::path& dir) {
  const auto t = read_csv(dir / "bounds.csv", {"t", "empirical", "ci_hi", "bound"});
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : t.rows)
    rows.push_back({r[t.column("kind")], fmt(num(r[t.column("t")]), 4), fmt(num(r[t.column("empirical")])),
                    fmt(num(r[t.column("ci_hi")])), fmt(num(r[t.column("bound")])), r[t.column("role")],
                    r[t.column("verdict")]});
  return table({"kind", "t", "empirical", "upper CI", "bound", "role", "verdict"}, rows);
}

}  // namespace

std::string emit_report(const fs::path& dir) {
  std::ostringstream md;
  md << "# Posterior consistency study report\n\n";
  const auto manifest_json = read_json(dir / "manifest.json");
  std::optional<RunManifest> manifest;
  if (manifest_json) {
    try {
      manifest = manifest_from_json(*manifest_json);
    } catch (const std::exception&) {
    }
  }
  if (manifest) {
    md << "Code version " << manifest->code_version << ". Master seed "
       << manifest->config.value("master_seed", json(nullptr)).dump() << ".\n\n";
  } else {
    md << "No readable manifest.json in this directory.\n\n";
  }

  struct Section {
    std::string title;
    std::string stage;
    std::function<std::string(const fs::path&)> render;
  };
  const std::vector<Section> sections = {
      {"KL rates", "kl-rate", kl_section},
      {"Equipartition: deviations vs n", "equipartition", equipartition_section},
      {"Sieve mass vs bound", "sieve-mass", sieve_section},
      {"Posterior mass of N_eps_n vs n", "posterior", posterior_mass_section},
      {"log pi(A | Y_n) / n vs -J(A)", "posterior", rate_section},
      {"rho_H^2 and rho_TV vs n", "predictive", predictive_section},
      {"Concentration bounds", "bounds", bounds_section},
  };
  for (const auto& s : sections) {
    md << "## " << s.title << "\n\n";
    const StageRecord* stage = nullptr;
    if (manifest)
      if (auto it = manifest->stages.find(s.stage); it != manifest->stages.end()) stage = &it->second;
    if (stage == nullptr) {
      md << "_not run_\n\n";
      continue;
    }
    if (stage->status != "completed") {
      md << "_not run_: stage " << stage->status << (stage->error.empty() ? "" : ": " + stage->error) << "\n\n";
      continue;
    }
    try {
      md << s.render(dir) << "\n";
    } catch (const CsvError& e) {
      md << "**parse error**: " << e.what() << "\n\n";
    }
  }
  const std::string text = md.str();
  write_file_atomic(dir / "report.md", text);
  return text;
}

}  // namespace postcon
