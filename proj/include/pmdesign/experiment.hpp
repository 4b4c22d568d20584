#ifndef PMDESIGN_EXPERIMENT_HPP
#define PMDESIGN_EXPERIMENT_HPP

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "pmdesign/designs.hpp"
#include "pmdesign/matching.hpp"
#include "pmdesign/montecarlo.hpp"
#include "pmdesign/response.hpp"

namespace pmdesign {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Blocks: one cell per block count B (covariate-sorted blocks).
/// Designs: one cell per design among BCRD, PM (Mahalanobis matching), PB.
enum class GridMode { blocks, designs };

struct ExperimentGrid {
  std::string preset;
  GridMode mode = GridMode::blocks;
  std::vector<ResponseKind> responses;
  std::vector<std::size_t> p_values;
  std::vector<std::size_t> block_counts;
  std::vector<DesignKind> designs;
  CovariateFamily covariates = CovariateFamily::uniform;
  std::size_t n_subjects = 96;
  std::size_t n_reps = 100000;
  double q = 0.95;
  std::optional<std::uint64_t> seed;
  std::size_t bootstrap_reps = 200;
  double ci_level = 0.95;
  std::size_t pb_restarts = 10000;
  std::size_t workers = 1;
  std::string out = "results.csv";
  bool timing = true;

  std::size_t cell_count() const {
    return responses.size() * p_values.size() * (mode == GridMode::blocks ? block_counts.size() : designs.size());
  }
};

inline const std::vector<std::size_t>& simulation_block_counts() {
  static const std::vector<std::size_t> b{1, 2, 3, 4, 6, 8, 12, 16, 24, 48};
  return b;
}

/// Named presets: "fig1" (block-count grid, uniform covariates), "exp" (the
/// same grid with mean-centered exponential covariates) and "fig2" (BCRD,
/// PM and PB with 30,000 replicates and 10,000 pair-switching restarts).
inline ExperimentGrid preset_grid(std::string_view name) {
  ExperimentGrid g;
  g.preset = std::string(name);
  g.responses.assign(kAllResponses.begin(), kAllResponses.end());
  g.p_values = {1, 2, 5};
  g.n_subjects = 96;
  if (name == "fig1" || name == "exp") {
    g.mode = GridMode::blocks;
    g.block_counts = simulation_block_counts();
    g.n_reps = 100000;
    g.covariates = name == "exp" ? CovariateFamily::exponential_centered : CovariateFamily::uniform;
  } else if (name == "fig2") {
    g.mode = GridMode::designs;
    g.designs = {DesignKind::BCRD, DesignKind::PM, DesignKind::PB};
    g.n_reps = 30000;
    g.pb_restarts = 10000;
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "' (expected fig1, fig2 or exp)");
  }
  return g;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto item = trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::uint64_t parse_unsigned(const std::string& v, const std::string& where) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError(where + ": expected a nonnegative integer, got '" + v + "'");
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError(where + ": integer out of range '" + v + "'");
  }
}

inline double parse_real(const std::string& v, const std::string& where) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw ConfigError(where + ": expected on/off, got '" + v + "'");
}

}  // namespace detail

/// Parses `key = value` lines ('#' starts a comment). `overrides` are applied
/// after the text, in order, as if appended to it; they are reported as
/// "override N" in messages. A preset line seeds the grid; later keys adjust
/// it. The returned grid is validated.
///
/// Keys: preset, mode (blocks|designs), responses, p, B, designs,
/// covariates (uniform|exponential), n_subjects, reps, q, seed, bootstrap,
/// ci_level, pb_restarts, workers, out, timing.
inline ExperimentGrid parse_config(std::string_view text,
                                   const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  std::vector<std::tuple<std::string, std::string, std::string>> entries;  // where, key, value
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string line(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    entries.emplace_back(where, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  for (std::size_t i = 0; i < overrides.size(); ++i)
    entries.emplace_back("override " + std::to_string(i + 1), overrides[i].first, overrides[i].second);

  // The preset, wherever it appears, is applied first.
  ExperimentGrid g;
  bool have_preset = false;
  for (const auto& [where, key, value] : entries) {
    if (key != "preset") continue;
    try {
      g = preset_grid(value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
    have_preset = true;
  }
  bool explicit_grid = false;
  for (const auto& [where, key, value] : entries) {
    if (key == "preset") continue;
    if (value.empty()) throw ConfigError(where + ": key '" + key + "' has no value");
    if (key == "mode") {
      if (value == "blocks") g.mode = GridMode::blocks;
      else if (value == "designs") g.mode = GridMode::designs;
      else throw ConfigError(where + ": mode must be blocks or designs");
      explicit_grid = true;
    } else if (key == "responses") {
      g.responses.clear();
      for (const auto& item : detail::split_list(value)) {
        const auto k = parse_response_kind(item);
        if (!k) throw ConfigError(where + ": unknown response '" + item + "'");
        g.responses.push_back(*k);
      }
      explicit_grid = true;
    } else if (key == "p") {
      g.p_values.clear();
      for (const auto& item : detail::split_list(value)) g.p_values.push_back(detail::parse_unsigned(item, where));
      explicit_grid = true;
    } else if (key == "B") {
      g.block_counts.clear();
      for (const auto& item : detail::split_list(value)) g.block_counts.push_back(detail::parse_unsigned(item, where));
      explicit_grid = true;
    } else if (key == "designs") {
      g.designs.clear();
      for (const auto& item : detail::split_list(value)) {
        if (item == "BCRD") g.designs.push_back(DesignKind::BCRD);
        else if (item == "PM") g.designs.push_back(DesignKind::PM);
        else if (item == "PB") g.designs.push_back(DesignKind::PB);
        else throw ConfigError(where + ": unknown design '" + item + "' (expected BCRD, PM or PB)");
      }
      explicit_grid = true;
    } else if (key == "covariates") {
      if (value == "uniform") g.covariates = CovariateFamily::uniform;
      else if (value == "exponential") g.covariates = CovariateFamily::exponential_centered;
      else throw ConfigError(where + ": covariates must be uniform or exponential");
    } else if (key == "n_subjects") {
      g.n_subjects = detail::parse_unsigned(value, where);
    } else if (key == "reps") {
      g.n_reps = detail::parse_unsigned(value, where);
    } else if (key == "q") {
      g.q = detail::parse_real(value, where);
    } else if (key == "seed") {
      g.seed = detail::parse_unsigned(value, where);
    } else if (key == "bootstrap") {
      g.bootstrap_reps = detail::parse_unsigned(value, where);
    } else if (key == "ci_level") {
      g.ci_level = detail::parse_real(value, where);
    } else if (key == "pb_restarts") {
      g.pb_restarts = detail::parse_unsigned(value, where);
    } else if (key == "workers") {
      g.workers = detail::parse_unsigned(value, where);
    } else if (key == "out") {
      g.out = value;
    } else if (key == "timing") {
      g.timing = detail::parse_bool(value, where);
    } else {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }

  if (!have_preset && !explicit_grid) throw ConfigError("no preset or explicit grid");
  if (g.responses.empty()) throw ConfigError("grid has no responses");
  if (g.p_values.empty()) throw ConfigError("grid has no covariate counts (p)");
  for (std::size_t p : g.p_values)
    if (p < 1 || p > 5) throw ConfigError("p=" + std::to_string(p) + " outside the supported range 1..5");
  if (g.n_subjects < 4 || g.n_subjects % 2 != 0)
    throw ConfigError("n_subjects=" + std::to_string(g.n_subjects) + " must be even and at least 4");
  if (g.mode == GridMode::blocks) {
    if (g.block_counts.empty()) throw ConfigError("blocks grid has no block counts (B)");
    for (std::size_t b : g.block_counts) {
      if (b == 0 || g.n_subjects % b != 0 || (g.n_subjects / b) % 2 != 0)
        throw ConfigError("(2n=" + std::to_string(g.n_subjects) + ", B=" + std::to_string(b) +
                          "): block size 2n/B must be an even integer");
    }
  } else {
    if (g.designs.empty()) throw ConfigError("designs grid has no designs");
    if (g.pb_restarts < 1) throw ConfigError("pb_restarts must be at least 1");
  }
  if (g.n_reps < 1) throw ConfigError("reps must be at least 1");
  if (!(g.q > 0.0 && g.q < 1.0)) throw ConfigError("q must lie in (0, 1)");
  if (!(g.ci_level > 0.0 && g.ci_level < 1.0)) throw ConfigError("ci_level must lie in (0, 1)");
  if (g.workers < 1) throw ConfigError("workers must be at least 1");
  if (!g.seed) throw ConfigError("seed required");
  return g;
}

// ---------------------------------------------------------------------------
// Grid execution and output
// ---------------------------------------------------------------------------

struct GridRow {
  ResponseKind response = ResponseKind::continuous;
  std::size_t p = 1;
  std::string design;
  std::optional<std::size_t> n_blocks;
  std::size_t n_subjects = 0;
  std::size_t n_reps = 0;
  std::uint64_t seed = 0;
  CriterionReport report;
  double runtime_ms = 0.0;
  std::string error;
};

/// Covariates shared by every cell of one (response, p) panel.
inline CovariateMatrix panel_covariates(const ExperimentGrid& g, ResponseKind kind, std::size_t p) {
  const CovariateDistribution dist =
      g.covariates == CovariateFamily::uniform ? uniform_covariates_for(kind) : exponential_covariates_for(kind);
  Stream rng = Stream::derive({*g.seed, 0xc0ULL, static_cast<std::uint64_t>(kind), p});
  return draw_covariates(dist, g.n_subjects, p, rng);
}

/// Runs every cell in grid order: responses, then p, then B (or design).
/// A failing cell is recorded in its row's error field and the grid goes on.
/// `progress` (optional) is called after each cell.
inline std::vector<GridRow> run_grid(const ExperimentGrid& g,
                                     const std::function<void(const GridRow&, std::size_t, std::size_t)>& progress = {}) {
  if (!g.seed) throw ConfigError("seed required");
  std::vector<GridRow> rows;
  const std::size_t total = g.cell_count();
  std::uint64_t cell_id = 0;
  for (ResponseKind kind : g.responses) {
    for (std::size_t p : g.p_values) {
      std::optional<CovariateMatrix> x;
      std::string panel_error;
      try {
        x = panel_covariates(g, kind, p);
      } catch (const std::exception& e) {
        panel_error = e.what();
      }
      const std::size_t n_cells = g.mode == GridMode::blocks ? g.block_counts.size() : g.designs.size();
      for (std::size_t c = 0; c < n_cells; ++c, ++cell_id) {
        GridRow row;
        row.response = kind;
        row.p = p;
        row.n_subjects = g.n_subjects;
        row.n_reps = g.n_reps;
        row.seed = *g.seed;
        const auto start = std::chrono::steady_clock::now();
        try {
          if (!x) throw std::runtime_error(panel_error);
          DesignSpec spec;
          if (g.mode == GridMode::blocks) {
            const std::size_t b = g.block_counts[c];
            row.n_blocks = b;
            if (b == 1) {
              spec = DesignSpec::bcrd(g.n_subjects);
            } else if (g.n_subjects / b == 2) {
              spec = DesignSpec::pm(build_blocking(*x, b));
            } else {
              spec = DesignSpec::block(build_blocking(*x, b));
            }
          } else {
            switch (g.designs[c]) {
              case DesignKind::BCRD:
                spec = DesignSpec::bcrd(g.n_subjects);
                row.n_blocks = 1;
                break;
              case DesignKind::PM: {
                const DistanceMatrix d = mahalanobis_distances(*x);
                spec = DesignSpec::pm(d.size() <= kExactMatchCapacity ? match_exact(d).pairing
                                                                      : match_heuristic(d).pairing);
                row.n_blocks = g.n_subjects / 2;
                break;
              }
              case DesignKind::PB:
                spec = DesignSpec::pb(
                    greedy_pair_switch(*x, g.pb_restarts, mix_key({*g.seed, 0x9bULL, cell_id}), g.workers).allocation);
                break;
              default:
                throw std::invalid_argument("designs grid supports BCRD, PM and PB");
            }
          }
          row.design = std::string(to_string(spec.kind));
          CellConfig cfg;
          cfg.model = simulation_model(kind, p);
          cfg.covariates = *x;
          cfg.design = std::move(spec);
          cfg.n_reps = g.n_reps;
          cfg.q = g.q;
          cfg.bootstrap_reps = g.bootstrap_reps;
          cfg.ci_level = g.ci_level;
          cfg.seed = *g.seed;
          cfg.cell_id = cell_id;
          cfg.workers = g.workers;
          row.report = run_cell(cfg);
          row.report.squared_errors.clear();
          row.report.squared_errors.shrink_to_fit();
          if (row.report.clamped_subjects > 0)
            row.error = "warning: " + std::to_string(row.report.clamped_subjects) + " subjects hit the link clamp";
        } catch (const std::exception& e) {
          if (row.design.empty())
            row.design = g.mode == GridMode::designs ? std::string(to_string(g.designs[c])) : "Block";
          row.error = e.what();
        }
        if (g.timing)
          row.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        rows.push_back(std::move(row));
        if (progress) progress(rows.back(), rows.size(), total);
      }
    }
  }
  return rows;
}

/// True when the row's cell failed (warnings do not count).
inline bool row_failed(const GridRow& row) { return !row.error.empty() && row.error.rfind("warning:", 0) != 0; }

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline constexpr std::string_view kCsvHeader =
    "response,p,design,B,n_subjects,n_reps,seed,mean_sq_err,sd_sq_err,emp_q95,emp_q95_lo,emp_q95_hi,"
    "approx_q95,approx_q95_lo,approx_q95_hi,runtime_ms,error";

/// One line per row, LF endings, numeric fields at full precision.
/// Failed cells leave the numeric fields empty.
inline void write_csv(const std::vector<GridRow>& rows, std::ostream& os) {
  os << kCsvHeader << '\n';
  for (const auto& r : rows) {
    os << to_string(r.response) << ',' << r.p << ',' << r.design << ',';
    if (r.n_blocks) os << *r.n_blocks;
    os << ',' << r.n_subjects << ',' << r.n_reps << ',' << r.seed;
    if (row_failed(r)) {
      os << ",,,,,,,,";
    } else {
      const auto& rep = r.report;
      for (double v : {rep.mean_sq_err, rep.sd_sq_err, rep.empirical_quantile, rep.empirical_ci.lo, rep.empirical_ci.hi,
                       rep.approx_quantile, rep.approx_ci.lo, rep.approx_ci.hi})
        os << ',' << format_real(v);
    }
    os << ',' << format_real(r.runtime_ms) << ',' << csv_escape(r.error) << '\n';
  }
}

enum class PlotAxis { block_count, design };

/// Writes one series file per (response, p) panel into `dir` and returns
/// the paths in panel order. The x column is B (blocks grids) or the design
/// name (designs grids); the y columns are the empirical and approximate
/// quantiles with their interval bounds, plus the mean squared error.
inline std::vector<std::filesystem::path> emit_plot_data(const std::vector<GridRow>& rows,
                                                         const std::filesystem::path& dir, PlotAxis axis) {
  std::filesystem::create_directories(dir);
  std::vector<std::pair<std::string, std::vector<const GridRow*>>> panels;
  std::map<std::string, std::size_t> index;
  for (const auto& r : rows) {
    const std::string key = std::string(to_string(r.response)) + "_p" + std::to_string(r.p);
    auto [it, inserted] = index.emplace(key, panels.size());
    if (inserted) panels.emplace_back(key, std::vector<const GridRow*>{});
    panels[it->second].second.push_back(&r);
  }
  std::vector<std::filesystem::path> paths;
  for (const auto& [key, members] : panels) {
    const auto path = dir / ("panel_" + key + ".csv");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << (axis == PlotAxis::block_count ? "B" : "design")
       << ",emp_q95,emp_q95_lo,emp_q95_hi,approx_q95,approx_q95_lo,approx_q95_hi,mean_sq_err\n";
    for (const GridRow* r : members) {
      if (row_failed(*r)) continue;
      if (axis == PlotAxis::block_count)
        os << (r->n_blocks ? std::to_string(*r->n_blocks) : std::string());
      else
        os << r->design;
      const auto& rep = r->report;
      for (double v : {rep.empirical_quantile, rep.empirical_ci.lo, rep.empirical_ci.hi, rep.approx_quantile,
                       rep.approx_ci.lo, rep.approx_ci.hi, rep.mean_sq_err})
        os << ',' << format_real(v);
      os << '\n';
    }
    paths.push_back(path);
  }
  return paths;
}

}  // namespace pmdesign

#endif  // PMDESIGN_EXPERIMENT_HPP
