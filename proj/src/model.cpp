#include "hdmr/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "hdmr/errors.hpp"
#include "hdmr/serialization.hpp"

namespace hdmr {

Group::Group(std::vector<int> d) : dims(std::move(d)) {
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (dims[k] < 0 || (k > 0 && dims[k] <= dims[k - 1])) {
      throw ConfigError("group dimensions must be strictly increasing and non-negative");
    }
  }
}

bool Group::contains(int dim) const { return std::binary_search(dims.begin(), dims.end(), dim); }

std::string format_group(const Group& g) {
  std::string s;
  for (std::size_t k = 0; k < g.dims.size(); ++k) {
    if (k) s += ';';
    s += std::to_string(g.dims[k] + 1);
  }
  return s;
}

Group parse_group(std::string_view label) {
  std::vector<int> dims;
  std::string item;
  std::stringstream ss{std::string(label)};
  while (std::getline(ss, item, ';')) dims.push_back(std::stoi(item) - 1);
  return Group(std::move(dims));
}

namespace {

void enumerate_rec(int order, int budget, MultiIndex& cur, std::vector<MultiIndex>& out) {
  if (static_cast<int>(cur.size()) == order) {
    out.push_back(cur);
    return;
  }
  const int remaining = order - static_cast<int>(cur.size()) - 1;
  // Each remaining slot needs at least degree 1.
  for (int deg = 1; deg <= budget - remaining; ++deg) {
    cur.push_back(deg + 1);
    enumerate_rec(order, budget - deg, cur, out);
    cur.pop_back();
  }
}

// Values of sum_a F(k, a) psi_{a+2} for one dimension slot over all rows.
Eigen::VectorXd factor_values(const Eigen::MatrixXd& table, const Eigen::MatrixXd& factor, int slot) {
  return table.rightCols(table.cols() - 1) * factor.row(slot).transpose();
}

}  // namespace

std::vector<MultiIndex> enumerate_dense_indices(int order, int max_degree) {
  std::vector<MultiIndex> out;
  if (order < 1 || order > max_degree) return out;
  MultiIndex cur;
  enumerate_rec(order, max_degree, cur, out);
  return out;
}

const Group& mode_group(const Mode& m) {
  return std::visit([](const auto& mode) -> const Group& { return mode.group; }, m);
}

double mode_variance(const Mode& m) {
  if (const auto* d = std::get_if<DenseMode>(&m)) return d->coeffs.squaredNorm();
  const auto& cp = std::get<CPMode>(m);
  double var = 0.0;
  for (int r = 0; r < cp.rank(); ++r) {
    for (int s = 0; s < cp.rank(); ++s) {
      double prod = 1.0;
      for (int k = 0; k < cp.group.order(); ++k) {
        prod *= cp.factors[static_cast<std::size_t>(r)].row(k).dot(cp.factors[static_cast<std::size_t>(s)].row(k));
      }
      var += prod;
    }
  }
  return var;
}

Eigen::VectorXd mode_values(const Mode& m, const BasisConfig& basis, const Eigen::MatrixXd& xi) {
  const Group& g = mode_group(m);
  for (int d : g.dims) {
    if (d >= xi.cols()) throw ShapeError("coordinates have no column for dimension " + std::to_string(d + 1));
  }
  const Eigen::Index nq = xi.rows();
  if (const auto* dense = std::get_if<DenseMode>(&m)) {
    int top = 1;
    for (const auto& idx : dense->indices) top = std::max(top, *std::max_element(idx.begin(), idx.end()));
    std::vector<Eigen::MatrixXd> tables;
    for (int d : g.dims) tables.push_back(eval_table(basis, xi.col(d), top));
    Eigen::VectorXd out = Eigen::VectorXd::Zero(nq);
    Eigen::VectorXd col(nq);
    for (std::size_t a = 0; a < dense->indices.size(); ++a) {
      col.setConstant(dense->coeffs[static_cast<Eigen::Index>(a)]);
      for (std::size_t k = 0; k < g.dims.size(); ++k) {
        col.array() *= tables[k].col(dense->indices[a][k] - 1).array();
      }
      out += col;
    }
    return out;
  }
  const auto& cp = std::get<CPMode>(m);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(nq);
  if (cp.rank() == 0) return out;
  const int n_index = static_cast<int>(cp.factors.front().cols()) + 1;
  std::vector<Eigen::MatrixXd> tables;
  for (int d : g.dims) tables.push_back(eval_table(basis, xi.col(d), n_index));
  for (const auto& f : cp.factors) {
    Eigen::VectorXd prod = Eigen::VectorXd::Ones(nq);
    for (int k = 0; k < g.order(); ++k) prod.array() *= factor_values(tables[static_cast<std::size_t>(k)], f, k).array();
    out += prod;
  }
  return out;
}

void HdmrModel::validate() const {
  basis.validate();
  if (nd < 1) throw ConfigError("model needs nd >= 1");
  if (n_pc < 0 || n_pc > ninter) throw ConfigError("model requires 0 <= N_PC <= Ninter");
  std::vector<Group> seen;
  for (const auto& m : modes) {
    const Group& g = mode_group(m);
    if (g.order() < 1 || g.order() > ninter || g.dims.back() >= nd) throw ConfigError("mode group out of range");
    if (std::find(seen.begin(), seen.end(), g) != seen.end()) throw ConfigError("duplicate mode group");
    seen.push_back(g);
    if (const auto* d = std::get_if<DenseMode>(&m)) {
      if (static_cast<Eigen::Index>(d->indices.size()) != d->coeffs.size()) throw ShapeError("dense mode size mismatch");
      for (const auto& idx : d->indices) {
        if (static_cast<int>(idx.size()) != g.order()) throw ShapeError("multi-index length mismatch");
        int total = 0;
        for (int a : idx) {
          if (a < 2) throw ConfigError("mode factors must exclude the constant polynomial");
          total += a - 1;
        }
        if (total > basis.max_degree) throw ConfigError("multi-index exceeds the total degree");
      }
    } else {
      const auto& cp = std::get<CPMode>(m);
      for (const auto& f : cp.factors) {
        if (f.rows() != g.order() || f.cols() < 1 || f.cols() > basis.max_degree) {
          throw ShapeError("CP factor shape mismatch");
        }
      }
    }
  }
}

double evaluate_model(const HdmrModel& m, std::span<const double> xi) {
  if (static_cast<int>(xi.size()) != m.nd) throw ShapeError("coordinate vector length differs from Nd");
  Eigen::MatrixXd row(1, m.nd);
  for (int k = 0; k < m.nd; ++k) row(0, k) = xi[static_cast<std::size_t>(k)];
  return evaluate_model(m, row)[0];
}

Eigen::VectorXd evaluate_model(const HdmrModel& m, const Eigen::MatrixXd& xi) {
  if (xi.cols() != m.nd) throw ShapeError("coordinate matrix width differs from Nd");
  Eigen::VectorXd out = Eigen::VectorXd::Constant(xi.rows(), m.f_empty);
  for (const auto& mode : m.modes) out += mode_values(mode, m.basis, xi);
  return out;
}

double model_mean(const HdmrModel& m) { return m.f_empty; }

double model_variance(const HdmrModel& m) {
  double var = 0.0;
  for (const auto& mode : m.modes) var += mode_variance(mode);
  return var;
}

std::map<Group, double> sobol_indices(const HdmrModel& m) {
  const double total = model_variance(m);
  if (!(total > 0.0)) throw UndefinedStatisticsError("Sobol indices need a positive model variance");
  std::map<Group, double> out;
  for (const auto& mode : m.modes) out[mode_group(mode)] = mode_variance(mode) / total;
  return out;
}

std::vector<double> total_sobol(const HdmrModel& m) {
  const double total = model_variance(m);
  if (!(total > 0.0)) throw UndefinedStatisticsError("total Sobol indices need a positive model variance");
  std::vector<double> out(static_cast<std::size_t>(m.nd), 0.0);
  for (const auto& mode : m.modes) {
    const double v = mode_variance(mode);
    for (int d : mode_group(mode).dims) out[static_cast<std::size_t>(d)] += v;
  }
  for (double& s : out) s /= total;
  return out;
}

std::uint64_t binomial(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return r;
}

std::uint64_t dictionary_cardinality(int nd, int no, int ninter, int n_pc, int nr) {
  if (n_pc < 0 || n_pc > ninter || ninter > nd) throw ConfigError("requires 0 <= N_PC <= Ninter <= Nd");
  std::uint64_t card = 0;
  for (int l = 0; l <= n_pc; ++l) card += binomial(nd, l) * binomial(no, l);
  for (int l = n_pc + 1; l <= ninter; ++l) {
    card += binomial(nd, l) * static_cast<std::uint64_t>(nr) * static_cast<std::uint64_t>(l) *
            static_cast<std::uint64_t>(no);
  }
  return card;
}

// Serialization -------------------------------------------------------------

nlohmann::json basis_to_json(const BasisConfig& b) {
  return {{"family", "legendre"}, {"lo", b.lo}, {"hi", b.hi}, {"No", b.max_degree}};
}

BasisConfig basis_from_json(const nlohmann::json& j) {
  BasisConfig b;
  if (j.at("family").get<std::string>() != "legendre") throw MalformedDocumentError("unknown polynomial family");
  b.lo = j.at("lo").get<double>();
  b.hi = j.at("hi").get<double>();
  b.max_degree = j.at("No").get<int>();
  b.validate();
  return b;
}

namespace {

nlohmann::json dims_to_json(const Group& g) {
  nlohmann::json dims = nlohmann::json::array();
  for (int d : g.dims) dims.push_back(d + 1);
  return dims;
}

Group dims_from_json(const nlohmann::json& j) {
  std::vector<int> dims;
  for (const auto& d : j) dims.push_back(d.get<int>() - 1);
  return Group(std::move(dims));
}

}  // namespace

nlohmann::json model_to_json(const HdmrModel& m) {
  nlohmann::json modes = nlohmann::json::array();
  for (const auto& mode : m.modes) {
    nlohmann::json jm;
    jm["dims"] = dims_to_json(mode_group(mode));
    if (const auto* d = std::get_if<DenseMode>(&mode)) {
      jm["kind"] = "dense";
      jm["indices"] = d->indices;
      jm["coeffs"] = std::vector<double>(d->coeffs.data(), d->coeffs.data() + d->coeffs.size());
    } else {
      const auto& cp = std::get<CPMode>(mode);
      jm["kind"] = "cp";
      nlohmann::json factors = nlohmann::json::array();
      for (const auto& f : cp.factors) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index k = 0; k < f.rows(); ++k) {
          std::vector<double> row(static_cast<std::size_t>(f.cols()));
          for (Eigen::Index a = 0; a < f.cols(); ++a) row[static_cast<std::size_t>(a)] = f(k, a);
          rows.push_back(row);
        }
        factors.push_back(rows);
      }
      jm["factors"] = factors;
    }
    modes.push_back(jm);
  }
  return {{"basis", basis_to_json(m.basis)}, {"Nd", m.nd},           {"N_PC", m.n_pc},
          {"Ninter", m.ninter},               {"f_empty", m.f_empty}, {"modes", modes}};
}

HdmrModel model_from_json(const nlohmann::json& j) {
  try {
    HdmrModel m;
    m.basis = basis_from_json(j.at("basis"));
    m.nd = j.at("Nd").get<int>();
    m.n_pc = j.at("N_PC").get<int>();
    m.ninter = j.at("Ninter").get<int>();
    m.f_empty = j.at("f_empty").get<double>();
    for (const auto& jm : j.at("modes")) {
      Group g = dims_from_json(jm.at("dims"));
      const auto kind = jm.at("kind").get<std::string>();
      if (kind == "dense") {
        DenseMode d;
        d.group = std::move(g);
        d.indices = jm.at("indices").get<std::vector<MultiIndex>>();
        const auto c = jm.at("coeffs").get<std::vector<double>>();
        d.coeffs = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
        m.modes.emplace_back(std::move(d));
      } else if (kind == "cp") {
        CPMode cp;
        cp.group = std::move(g);
        for (const auto& jf : jm.at("factors")) {
          const auto rows = jf.get<std::vector<std::vector<double>>>();
          if (rows.empty()) throw MalformedDocumentError("empty CP factor");
          Eigen::MatrixXd f(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
          for (std::size_t k = 0; k < rows.size(); ++k) {
            if (rows[k].size() != rows.front().size()) throw MalformedDocumentError("ragged CP factor");
            for (std::size_t a = 0; a < rows[k].size(); ++a) {
              f(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(a)) = rows[k][a];
            }
          }
          cp.factors.push_back(std::move(f));
        }
        m.modes.emplace_back(std::move(cp));
      } else {
        throw MalformedDocumentError("unknown mode kind '" + kind + "'");
      }
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedDocumentError(std::string("model document: ") + e.what());
  } catch (const ConfigError& e) {
    throw MalformedDocumentError(std::string("model document: ") + e.what());
  } catch (const ShapeError& e) {
    throw MalformedDocumentError(std::string("model document: ") + e.what());
  }
}

nlohmann::json parse_document(std::string_view document) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(document);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedDocumentError(std::string("malformed document: ") + e.what());
  }
  if (!j.is_object() || !j.contains("schema") || !j["schema"].is_number_integer()) {
    throw MalformedDocumentError("document has no schema version");
  }
  if (j["schema"].get<int>() != kModelSchemaVersion) {
    throw SchemaVersionError("unsupported schema version " + j["schema"].dump());
  }
  return j;
}

std::string save_model(const HdmrModel& m) {
  nlohmann::json j = model_to_json(m);
  j["schema"] = kModelSchemaVersion;
  j["kind"] = "hdmr";
  return j.dump(1) + "\n";
}

HdmrModel load_model(std::string_view document) {
  const auto j = parse_document(document);
  if (j.value("kind", std::string("hdmr")) != "hdmr") throw MalformedDocumentError("document is not an HDMR model");
  return model_from_json(j);
}

}  // namespace hdmr
