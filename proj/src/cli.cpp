#include "hdmr/cli.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hdmr/bench.hpp"
#include "hdmr/dataset.hpp"
#include "hdmr/errors.hpp"
#include "hdmr/fitting.hpp"
#include "hdmr/model.hpp"
#include "hdmr/parallel.hpp"
#include "hdmr/selection.hpp"
#include "hdmr/separated.hpp"
#include "hdmr/serialization.hpp"
#include "hdmr/testbed.hpp"

namespace hdmr {
namespace {

constexpr const char* kVersion = "0.1.0";

class FileError : public Error {
  using Error::Error;
};

using Clock = std::chrono::steady_clock;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path);
  out << text;
  if (!out) throw FileError("write failed for " + path);
}

template <class F>
void write_stream(const std::string& path, F&& fn) {
  std::ostringstream ss;
  fn(ss);
  write_file(path, ss.str());
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const ShapeError*>(&e) || dynamic_cast<const SizeError*>(&e) ||
      dynamic_cast<const NonFiniteError*>(&e) || dynamic_cast<const MalformedDocumentError*>(&e) ||
      dynamic_cast<const SchemaVersionError*>(&e) || dynamic_cast<const FileError*>(&e) ||
      dynamic_cast<const IndexError*>(&e)) {
    return kExitData;
  }
  return kExitFit;
}

// Interval of the polynomial basis: explicit, or the canonical interval
// that contains every coordinate.
BasisConfig basis_for(const Eigen::MatrixXd& xi, std::optional<double> lo, std::optional<double> hi, int degree) {
  BasisConfig b;
  b.max_degree = degree;
  const double mn = xi.minCoeff();
  const double mx = xi.maxCoeff();
  if (lo && hi) {
    b.lo = *lo;
    b.hi = *hi;
  } else if (mn >= 0.0 && mx <= 1.0) {
    b.lo = 0.0;
    b.hi = 1.0;
  } else if (mn >= -1.0 && mx <= 1.0) {
    b.lo = -1.0;
    b.hi = 1.0;
  } else {
    b.lo = mn;
    b.hi = mx;
  }
  b.validate();
  return b;
}

struct Run {
  std::string command;
  std::vector<std::string> args;
  std::string manifest;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::map<std::string, double> timings;
  nlohmann::json config = nlohmann::json::object();

  template <class F>
  auto timed(const std::string& stage, F&& fn) {
    const auto t0 = Clock::now();
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      timings[stage] += std::chrono::duration<double>(Clock::now() - t0).count();
    } else {
      auto r = fn();
      timings[stage] += std::chrono::duration<double>(Clock::now() - t0).count();
      return r;
    }
  }
};

void snapshot_options(const CLI::App* sub, nlohmann::json& cfg) {
  for (const auto* opt : sub->get_options()) {
    const std::string name = opt->get_name(false, true);
    if (name.empty() || name == "--help") continue;
    const auto& res = opt->results();
    if (!res.empty()) {
      std::string joined;
      for (std::size_t i = 0; i < res.size(); ++i) joined += (i ? "," : "") + res[i];
      cfg[name] = joined;
    } else {
      cfg[name] = opt->get_default_str();
    }
  }
}

void write_manifest(const Run& run, int code) {
  if (run.manifest.empty()) return;
  nlohmann::json j;
  j["schema"] = 1;
  j["kind"] = "run-manifest";
  j["command"] = run.command;
  j["args"] = run.args;
  j["config"] = run.config;
  j["seed"] = run.seed;
  j["inputs"] = run.inputs;
  j["outputs"] = run.outputs;
  j["versions"] = {{"hdmr", kVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"compiler", __VERSION__},
                   {"cli11", CLI11_VERSION}};
  j["timings"] = run.timings;
  j["workers"] = worker_count();
  j["exit_code"] = code;
  write_file(run.manifest, j.dump(1) + "\n");
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad integer list entry '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty integer list");
  return out;
}

struct FitOpts {
  std::string data, out, diag, path_csv;
  int no = 8, ninter = 3, npc = 3, nolars = 5, nr = 3, rank = 2, cardx = 32;
  int max_groups = 100000;
  std::uint64_t seed = 0;
  std::string mode = "hdmr";
  bool robust = false, no_update = false, hierarchical = false, update_spatial = false;
  double s = 0.0, su = 0.0, beta = 0.0;
  int n_train = -1, n_val = -1, n_test = 0;
  double val_frac = 0.2;
  std::optional<double> xi_lo, xi_hi;
};

int cmd_fit(const FitOpts& o, Run& run, std::ostream& out) {
  run.seed = o.seed;
  run.inputs.push_back(o.data);
  const SampleSet data = run.timed("load", [&] { return load_csv(o.data); });
  data.validate();

  const int nq = data.nq();
  const int n_test = o.n_test;
  int n_val = o.n_val >= 0 ? o.n_val : static_cast<int>(std::floor(o.val_frac * (nq - n_test)));
  int n_train = o.n_train >= 0 ? o.n_train : nq - n_test - n_val;
  const Split parts = split(data, n_train, n_val, n_test, o.seed);

  SelectionConfig sel;
  sel.nolars = o.nolars;
  sel.ninter = o.ninter;
  sel.max_groups = o.max_groups;
  sel.hierarchical = o.hierarchical;
  FitConfig fc;
  fc.no = o.no;
  fc.n_pc = o.npc;
  fc.ninter = o.ninter;
  fc.nr = o.nr;
  fc.seed = o.seed;
  fc.beta = o.beta;
  fc.update = !o.no_update;
  fc.robust = o.robust;
  fc.noise.s = o.s;
  fc.noise.s_u = o.su;
  fc.max_groups = o.max_groups;
  sel.validate();
  fc.validate();
  const BasisConfig basis = basis_for(data.xi, o.xi_lo, o.xi_hi, o.no);
  fc.noise.box_lo = basis.lo;
  fc.noise.box_hi = basis.hi;

  const std::string diag = o.diag.empty() ? o.out + ".diag.csv" : o.diag;
  std::optional<double> test_error;
  bool undefined_error = false;
  auto score = [&](auto&& fn) {
    if (n_test == 0) return;
    try {
      test_error = fn();
    } catch (const UndefinedStatisticsError&) {
      undefined_error = true;
    }
  };

  if (o.mode == "separated") {
    if (data.ndx() < 1) throw ShapeError("separated mode needs x columns in the data");
    SeparatedConfig sc;
    sc.lambda_max = o.rank;
    sc.cardx = o.cardx;
    sc.update_spatial = o.update_spatial;
    sc.seed = o.seed;
    sc.validation_fraction = n_val > 0 ? static_cast<double>(n_val) / (n_train + n_val) : 0.0;
    sc.validate();
    const SampleSet fit_rows = n_val > 0 ? concat(parts.train, parts.validation) : parts.train;
    SeparatedTrace trace;
    const SeparatedModel m = run.timed("fit", [&] { return fit_separated(fit_rows, sel, fc, sc, basis, &trace); });
    write_file(o.out, save_separated(m));
    write_stream(diag, [&](std::ostream& os) {
      os << "rank,train_residual,outer_iterations\n";
      os.precision(17);
      for (std::size_t r = 0; r < trace.train_residual.size(); ++r) {
        os << r << ',' << trace.train_residual[r] << ',' << trace.outer_iterations[r] << '\n';
      }
    });
    run.outputs.insert(run.outputs.end(), {o.out, diag});
    out << "rank " << m.rank() << '\n';
    score([&] { return relative_error(m, parts.test); });
  } else if (o.mode == "hdmr") {
    const SelectionPath path = run.timed("select", [&] { return glars_select(parts.train, sel, basis); });
    const FitResult fr = run.timed("fit", [&] { return fit_hdmr(parts.train, parts.validation, path, fc, basis); });
    const std::string path_csv = o.path_csv.empty() ? o.out + ".path.csv" : o.path_csv;
    write_file(o.out, save_model(fr.model));
    write_stream(diag, [&](std::ostream& os) { write_diagnostics_csv(fr.diagnostics, os); });
    write_stream(path_csv, [&](std::ostream& os) { write_path_csv(path, os); });
    run.outputs.insert(run.outputs.end(), {o.out, diag, path_csv});
    out << "groups " << fr.model.modes.size() << '\n';
    score([&] { return relative_error(fr.model, parts.test); });
  } else {
    throw ConfigError("unknown mode '" + o.mode + "' (expected hdmr or separated)");
  }
  if (test_error) {
    std::ostringstream ss;
    ss.precision(6);
    ss << std::scientific << *test_error;
    out << "test_error " << ss.str() << '\n';
  } else if (undefined_error) {
    out << "test_error undefined\n";
  }
  return kExitOk;
}

struct PredictOpts {
  std::string model, data, out;
};

int cmd_predict(const PredictOpts& o, Run& run, std::ostream&) {
  run.inputs = {o.model, o.data};
  const std::string doc = read_file(o.model);
  const SampleSet data = load_csv(o.data);
  Eigen::VectorXd pred;
  if (document_kind(doc) == "separated") {
    const SeparatedModel m = load_separated(doc);
    pred = run.timed("predict", [&] { return evaluate_separated(m, data.x, data.xi); });
  } else {
    const HdmrModel m = load_model(doc);
    if (data.nd() != m.nd) throw ShapeError("data has " + std::to_string(data.nd()) + " xi columns, model expects " + std::to_string(m.nd));
    pred = run.timed("predict", [&] { return evaluate_model(m, data.xi); });
  }
  write_stream(o.out, [&](std::ostream& os) {
    os << "u,u_hat\n";
    char buf[64];
    for (Eigen::Index q = 0; q < pred.size(); ++q) {
      auto r1 = std::to_chars(buf, buf + sizeof buf, data.u[q]);
      os.write(buf, r1.ptr - buf);
      os << ',';
      auto r2 = std::to_chars(buf, buf + sizeof buf, pred[q]);
      os.write(buf, r2.ptr - buf);
      os << '\n';
    }
  });
  run.outputs.push_back(o.out);
  return kExitOk;
}

struct StatsOpts {
  std::string model, out;
};

int cmd_stats(const StatsOpts& o, Run& run, std::ostream& out) {
  run.inputs = {o.model};
  const std::string doc = read_file(o.model);
  if (document_kind(doc) != "hdmr") throw ConfigError("stats needs an HDMR model");
  const HdmrModel m = load_model(doc);
  const double mean = model_mean(m);
  const double var = model_variance(m);
  std::map<Group, double> s;
  std::vector<double> st;
  if (var > 0.0) {
    s = sobol_indices(m);
    st = total_sobol(m);
  }
  std::ostringstream text;
  text.precision(17);
  text << "mean " << mean << '\n' << "variance " << var << '\n';
  for (const auto& [g, v] : s) text << "S " << format_group(g) << ' ' << v << '\n';
  for (std::size_t i = 0; i < st.size(); ++i) text << "ST " << i + 1 << ' ' << st[i] << '\n';
  out << text.str();
  if (!o.out.empty()) {
    write_stream(o.out, [&](std::ostream& os) {
      os.precision(17);
      os << "kind,dims,value\n";
      os << "mean,," << mean << '\n' << "variance,," << var << '\n';
      for (const auto& [g, v] : s) os << "S," << format_group(g) << ',' << v << '\n';
      for (std::size_t i = 0; i < st.size(); ++i) os << "ST," << i + 1 << ',' << st[i] << '\n';
    });
    run.outputs.push_back(o.out);
  }
  return kExitOk;
}

struct GenOpts {
  std::string out, spectrum;
  int nq = 1000;
  std::uint64_t seed = 0;
  std::string mode = "point";
  DiffusionConfig cfg;
};

int cmd_gen(const GenOpts& o, Run& run, std::ostream&) {
  run.seed = o.seed;
  if (o.mode != "point" && o.mode != "scattered") throw ConfigError("mode must be point or scattered");
  const DiffusionTestbed bed(o.cfg);
  const SampleSet s = run.timed("generate", [&] {
    return generate_dataset(bed, o.nq, o.seed, o.mode == "point" ? SampleMode::Point : SampleMode::Scattered);
  });
  save_csv(s, o.out);
  run.outputs.push_back(o.out);
  if (!o.spectrum.empty()) {
    write_stream(o.spectrum, [&](std::ostream& os) { write_spectrum_csv(bed.nu_field(), os); });
    run.outputs.push_back(o.spectrum);
  }
  return kExitOk;
}

struct BenchOpts {
  std::string out_dir = ".";
  bool convergence = false, scaling = false, separated = false;
  std::string nq_list = "500,1000,3000";
  int seeds = 5, n_test = 10000;
  int no = 8, ninter = 3, npc = 3, nolars = 5, nr = 3;
  int nd_nu = 5, nd_f = 5;
  int sep_nq = 3000, rank = 2, cardx = 32, sep_no = 10;
  std::uint64_t seed = 0;
};

int cmd_bench(const BenchOpts& o, Run& run, std::ostream& out) {
  run.seed = o.seed;
  if (!o.convergence && !o.scaling && !o.separated) throw ConfigError("bench needs --convergence, --scaling or --separated");
  std::filesystem::create_directories(o.out_dir);
  BasisConfig basis;
  basis.lo = 0.0;
  basis.hi = 1.0;
  SelectionConfig sel;
  sel.nolars = o.nolars;
  sel.ninter = o.ninter;
  FitConfig fc;
  fc.no = o.no;
  fc.n_pc = o.npc;
  fc.ninter = o.ninter;
  fc.nr = o.nr;
  sel.validate();
  fc.validate();
  if (o.convergence) {
    DiffusionConfig dc;
    dc.nd_nu = o.nd_nu;
    dc.nd_f = o.nd_f;
    const auto rows = run.timed("convergence", [&] {
      return convergence_study(dc, parse_int_list(o.nq_list), o.seeds, o.n_test, sel, fc, basis);
    });
    const std::string path = o.out_dir + "/convergence.csv";
    write_stream(path, [&](std::ostream& os) { write_convergence_csv(rows, os); });
    run.outputs.push_back(path);
    out << "wrote " << path << '\n';
  }
  if (o.separated) {
    DiffusionConfig dc;
    dc.nd_nu = o.nd_nu;
    dc.nd_f = o.nd_f;
    SeparatedConfig sc;
    sc.lambda_max = o.rank;
    sc.cardx = o.cardx;
    FitConfig sf = fc;
    sf.no = o.sep_no;
    const auto rows = run.timed("separated", [&] {
      return separated_study(dc, o.sep_nq, o.n_test, o.seed, sel, sf, sc, basis);
    });
    const std::string path = o.out_dir + "/separated.csv";
    write_stream(path, [&](std::ostream& os) { write_rank_csv(rows, os); });
    run.outputs.push_back(path);
    out << "wrote " << path << '\n';
  }
  if (o.scaling) {
    std::vector<ScalingRow> rows;
    run.timed("scaling", [&] {
      rows.push_back(measure_scan_scaling(2000, 100, o.nolars, 30, 5, o.seed));
      rows.push_back(measure_fit_scaling(2000, 10, o.no, 5, o.seed));
    });
    const std::string path = o.out_dir + "/scaling.csv";
    write_stream(path, [&](std::ostream& os) { write_scaling_csv(rows, os); });
    run.outputs.push_back(path);
    for (const auto& r : rows) out << r.quantity << " ratio " << r.ratio << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse HDMR surrogates from scattered data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Run run;
  run.args = args;
  std::string manifest_flag;
  int threads = 0;
  std::function<int()> action;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--manifest", manifest_flag, "Run manifest path");
    sub->add_option("--threads", threads, "Worker count (overrides HDMR_THREADS)")->check(CLI::NonNegativeNumber);
  };

  FitOpts fo;
  auto* fit = app.add_subcommand("fit", "Select and fit a surrogate");
  fit->add_option("--data", fo.data, "Input CSV")->required();
  fit->add_option("--out", fo.out, "Model file")->required();
  fit->add_option("--diag", fo.diag, "Diagnostics CSV (default <out>.diag.csv)");
  fit->add_option("--path-csv", fo.path_csv, "Selection path CSV (default <out>.path.csv)");
  fit->add_option("--no", fo.no, "Maximum polynomial degree No")->capture_default_str();
  fit->add_option("--ninter", fo.ninter, "Maximum interaction order")->capture_default_str();
  fit->add_option("--npc", fo.npc, "Highest order fitted with dense modes")->capture_default_str();
  fit->add_option("--nolars", fo.nolars, "Degree of the selection dictionary")->capture_default_str();
  fit->add_option("--nr", fo.nr, "CP rank")->capture_default_str();
  fit->add_option("--rank", fo.rank, "Separated rank")->capture_default_str();
  fit->add_option("--cardx", fo.cardx, "Spatial basis size")->capture_default_str();
  fit->add_option("--seed", fo.seed)->capture_default_str();
  fit->add_option("--mode", fo.mode, "hdmr or separated")->capture_default_str();
  fit->add_flag("--robust", fo.robust, "Weighted total least squares for dense modes");
  fit->add_option("--s", fo.s, "Coordinate noise scale")->capture_default_str();
  fit->add_option("--su", fo.su, "Relative value noise scale")->capture_default_str();
  fit->add_option("--beta", fo.beta, "Ridge parameter")->capture_default_str();
  fit->add_flag("--no-update", fo.no_update, "Skip update sweeps");
  fit->add_flag("--hierarchical", fo.hierarchical, "Admit groups only after their subsets");
  fit->add_flag("--update-spatial", fo.update_spatial, "Jointly refit all spatial modes after each rank");
  fit->add_option("--max-groups", fo.max_groups)->capture_default_str();
  fit->add_option("--train", fo.n_train, "Training rows (default: the rest)");
  fit->add_option("--val", fo.n_val, "Validation rows (default: --val-frac)");
  fit->add_option("--test", fo.n_test, "Test rows")->capture_default_str();
  fit->add_option("--val-frac", fo.val_frac)->capture_default_str();
  fit->add_option("--xi-lo", fo.xi_lo, "Lower end of the germ interval");
  fit->add_option("--xi-hi", fo.xi_hi, "Upper end of the germ interval");
  common(fit);
  fit->callback([&] {
    run.command = "fit";
    snapshot_options(fit, run.config);
    if (manifest_flag.empty()) manifest_flag = fo.out + ".manifest.json";
    action = [&] { return cmd_fit(fo, run, out); };
  });

  PredictOpts po;
  auto* pred = app.add_subcommand("predict", "Evaluate a model at CSV points");
  pred->add_option("--model", po.model)->required();
  pred->add_option("--data", po.data)->required();
  pred->add_option("--out", po.out)->required();
  common(pred);
  pred->callback([&] {
    run.command = "predict";
    snapshot_options(pred, run.config);
    if (manifest_flag.empty()) manifest_flag = po.out + ".manifest.json";
    action = [&] { return cmd_predict(po, run, out); };
  });

  StatsOpts so;
  auto* stats = app.add_subcommand("stats", "Mean, variance and Sobol indices of a model");
  stats->add_option("--model", so.model)->required();
  stats->add_option("--out", so.out, "CSV output");
  common(stats);
  stats->callback([&] {
    run.command = "stats";
    snapshot_options(stats, run.config);
    if (manifest_flag.empty()) manifest_flag = (so.out.empty() ? so.model + ".stats" : so.out) + ".manifest.json";
    action = [&] { return cmd_stats(so, run, out); };
  });

  GenOpts go;
  auto* gen = app.add_subcommand("gen-diffusion", "Sample the stochastic diffusion test case");
  gen->add_option("--out", go.out)->required();
  gen->add_option("--nq", go.nq)->capture_default_str();
  gen->add_option("--seed", go.seed)->capture_default_str();
  gen->add_option("--mode", go.mode, "point or scattered")->capture_default_str();
  gen->add_option("--nd-nu", go.cfg.nd_nu)->capture_default_str();
  gen->add_option("--nd-f", go.cfg.nd_f)->capture_default_str();
  gen->add_option("--x-star", go.cfg.x_star)->capture_default_str();
  gen->add_option("--u-minus", go.cfg.u_minus)->capture_default_str();
  gen->add_option("--u-plus", go.cfg.u_plus)->capture_default_str();
  gen->add_option("--mx", go.cfg.mx)->capture_default_str();
  gen->add_option("--mk", go.cfg.mk)->capture_default_str();
  gen->add_option("--sigma", go.cfg.sigma_nu)->capture_default_str();
  gen->add_option("--lc", go.cfg.lc_nu)->capture_default_str();
  gen->add_option("--germ-lo", go.cfg.germ_lo)->capture_default_str();
  gen->add_option("--germ-hi", go.cfg.germ_hi)->capture_default_str();
  gen->add_option("--spectrum", go.spectrum, "KL spectrum CSV");
  common(gen);
  gen->callback([&] {
    run.command = "gen-diffusion";
    snapshot_options(gen, run.config);
    go.cfg.sigma_f = go.cfg.sigma_nu;
    go.cfg.lc_f = go.cfg.lc_nu;
    if (manifest_flag.empty()) manifest_flag = go.out + ".manifest.json";
    action = [&] { return cmd_gen(go, run, out); };
  });

  BenchOpts bo;
  auto* bench = app.add_subcommand("bench", "Convergence, separated-rank and scaling tables");
  bench->add_option("--out-dir", bo.out_dir)->capture_default_str();
  bench->add_flag("--convergence", bo.convergence);
  bench->add_flag("--scaling", bo.scaling);
  bench->add_flag("--separated", bo.separated);
  bench->add_option("--nq-list", bo.nq_list)->capture_default_str();
  bench->add_option("--seeds", bo.seeds)->capture_default_str();
  bench->add_option("--n-test", bo.n_test)->capture_default_str();
  bench->add_option("--no", bo.no)->capture_default_str();
  bench->add_option("--ninter", bo.ninter)->capture_default_str();
  bench->add_option("--npc", bo.npc)->capture_default_str();
  bench->add_option("--nolars", bo.nolars)->capture_default_str();
  bench->add_option("--nr", bo.nr)->capture_default_str();
  bench->add_option("--nd-nu", bo.nd_nu)->capture_default_str();
  bench->add_option("--nd-f", bo.nd_f)->capture_default_str();
  bench->add_option("--sep-nq", bo.sep_nq)->capture_default_str();
  bench->add_option("--sep-no", bo.sep_no)->capture_default_str();
  bench->add_option("--rank", bo.rank)->capture_default_str();
  bench->add_option("--cardx", bo.cardx)->capture_default_str();
  bench->add_option("--seed", bo.seed)->capture_default_str();
  common(bench);
  bench->callback([&] {
    run.command = "bench";
    snapshot_options(bench, run.config);
    if (manifest_flag.empty()) manifest_flag = bo.out_dir + "/bench.manifest.json";
    action = [&] { return cmd_bench(bo, run, out); };
  });

  std::string replay_path;
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("--manifest", replay_path)->required();
  replay->callback([&] {
    action = [&]() -> int {
      const auto j = nlohmann::json::parse(read_file(replay_path), nullptr, false);
      if (j.is_discarded() || !j.contains("args") || !j["args"].is_array()) throw MalformedDocumentError("not a run manifest");
      return run_cli(j["args"].get<std::vector<std::string>>(), out, err);
    };
  });

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }

  if (threads > 0) set_worker_count(threads);
  run.manifest = manifest_flag;
  int code = kExitOk;
  try {
    code = action();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    code = exit_code_for(e);
  }
  if (run.command.empty()) return code;
  try {
    write_manifest(run, code);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    if (code == kExitOk) code = kExitData;
  }
  return code;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace hdmr
