#include "hdmr/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hdmr/errors.hpp"
#include "hdmr/rng.hpp"

namespace hdmr {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t start = cell.find_first_not_of(' ');
    cells.push_back(start == std::string::npos ? std::string{} : cell.substr(start));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc{} || ptr != last) {
    throw ParseError(row, "non-numeric cell '" + cell + "' in column " + std::to_string(col + 1));
  }
  if (!std::isfinite(v)) {
    throw ParseError(row, "non-finite value in column " + std::to_string(col + 1));
  }
  return v;
}

void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  out.append(buf, ptr);
}

}  // namespace

void SampleSet::validate() const {
  if (u.size() < 1) throw SizeError("sample set has no rows");
  if (xi.rows() != u.size() || x.rows() != u.size()) throw ShapeError("row counts of x, xi, u differ");
  if (xi.cols() < 1) throw ShapeError("sample set needs at least one stochastic dimension");
  if (!x.allFinite() || !xi.allFinite() || !u.allFinite()) throw NonFiniteError("sample set has non-finite entries");
}

SampleSet SampleSet::subset(std::span<const int> rows, SplitTag new_tag) const {
  SampleSet out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.x.resize(n, x.cols());
  out.xi.resize(n, xi.cols());
  out.u.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const int r = rows[static_cast<std::size_t>(k)];
    out.x.row(k) = x.row(r);
    out.xi.row(k) = xi.row(r);
    out.u[k] = u[r];
  }
  out.tag = new_tag;
  return out;
}

SampleSet concat(const SampleSet& a, const SampleSet& b) {
  if (a.nd() != b.nd() || a.ndx() != b.ndx()) throw ShapeError("cannot concatenate sample sets of different widths");
  SampleSet out;
  out.x.resize(a.nq() + b.nq(), a.ndx());
  out.xi.resize(a.nq() + b.nq(), a.nd());
  out.u.resize(a.nq() + b.nq());
  out.x << a.x, b.x;
  out.xi << a.xi, b.xi;
  out.u << a.u, b.u;
  out.tag = SplitTag::Unsplit;
  return out;
}

SampleSet read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(0, "missing header");
  const auto header = split_line(line);
  int ndx = 0;
  int nd = 0;
  std::size_t c = 0;
  while (c < header.size() && header[c] == "x" + std::to_string(ndx + 1)) {
    ++ndx;
    ++c;
  }
  while (c < header.size() && header[c] == "xi" + std::to_string(nd + 1)) {
    ++nd;
    ++c;
  }
  if (c >= header.size() || header[c] != "u" || c + 1 != header.size()) {
    throw ParseError(0, "header must be x1..xN, xi1..xM, u");
  }
  if (nd < 1) throw ParseError(0, "header declares no xi columns");
  const std::size_t width = header.size();

  std::vector<double> values;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const auto cells = split_line(line);
    if (cells.size() != width) {
      throw ParseError(row, "expected " + std::to_string(width) + " cells, found " + std::to_string(cells.size()));
    }
    for (std::size_t k = 0; k < width; ++k) values.push_back(parse_cell(cells[k], row, k));
  }
  if (row == 0) throw SizeError("CSV has no data rows");

  SampleSet set;
  const auto nq = static_cast<Eigen::Index>(row);
  set.x.resize(nq, ndx);
  set.xi.resize(nq, nd);
  set.u.resize(nq);
  for (Eigen::Index q = 0; q < nq; ++q) {
    const double* r = values.data() + static_cast<std::size_t>(q) * width;
    for (int k = 0; k < ndx; ++k) set.x(q, k) = r[k];
    for (int k = 0; k < nd; ++k) set.xi(q, k) = r[ndx + k];
    set.u[q] = r[ndx + nd];
  }
  return set;
}

SampleSet load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open " + path);
  return read_csv(in);
}

void write_csv(const SampleSet& set, std::ostream& out) {
  std::string buf;
  for (int k = 0; k < set.ndx(); ++k) buf += "x" + std::to_string(k + 1) + ",";
  for (int k = 0; k < set.nd(); ++k) buf += "xi" + std::to_string(k + 1) + ",";
  buf += "u\n";
  for (int q = 0; q < set.nq(); ++q) {
    for (int k = 0; k < set.ndx(); ++k) {
      append_double(buf, set.x(q, k));
      buf += ',';
    }
    for (int k = 0; k < set.nd(); ++k) {
      append_double(buf, set.xi(q, k));
      buf += ',';
    }
    append_double(buf, set.u[q]);
    buf += '\n';
  }
  out << buf;
}

void save_csv(const SampleSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_csv(set, out);
}

Split split(const SampleSet& set, int n_train, int n_val, int n_test, std::uint64_t seed) {
  if (n_train < 1 || n_val < 0 || n_test < 0) throw SizeError("split counts must be non-negative, n_train >= 1");
  if (static_cast<long>(n_train) + n_val + n_test > set.nq()) {
    throw SizeError("split counts exceed the " + std::to_string(set.nq()) + " available samples");
  }
  std::vector<int> order(static_cast<std::size_t>(set.nq()));
  std::iota(order.begin(), order.end(), 0);
  StreamRng rng(seed, 0x5eed5eedULL);
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(order[i - 1], order[j]);
  }
  std::span<const int> all(order);
  Split out;
  out.train = set.subset(all.subspan(0, static_cast<std::size_t>(n_train)), SplitTag::Train);
  out.validation = set.subset(all.subspan(static_cast<std::size_t>(n_train), static_cast<std::size_t>(n_val)),
                              SplitTag::Validation);
  out.test = set.subset(all.subspan(static_cast<std::size_t>(n_train + n_val), static_cast<std::size_t>(n_test)),
                        SplitTag::Test);
  return out;
}

double reflect_into(double v, double lo, double hi) {
  const double width = hi - lo;
  if (!(width > 0.0)) return lo;
  if (v >= lo && v <= hi) return v;
  // Fold onto a period of 2*width, then mirror the upper half.
  double t = std::fmod(v - lo, 2.0 * width);
  if (t < 0.0) t += 2.0 * width;
  if (t > width) t = 2.0 * width - t;
  return lo + t;
}

SampleSet inject_noise(const SampleSet& set, const NoiseModel& noise, std::uint64_t seed) {
  set.validate();
  if (!std::isfinite(noise.s) || !std::isfinite(noise.s_u) || noise.s < 0.0 || noise.s_u < 0.0) {
    throw ConfigError("noise scales must be finite and non-negative");
  }
  SampleSet out = set;
  const int nd = set.nd();
  for (int q = 0; q < set.nq(); ++q) {
    if (noise.s > 0.0) {
      for (int k = 0; k < nd; ++k) {
        StreamRng rng(seed, StreamRng::stream_id(static_cast<std::uint64_t>(q), static_cast<std::uint64_t>(k)));
        out.xi(q, k) = reflect_into(set.xi(q, k) + noise.s * rng.normal(), noise.box_lo, noise.box_hi);
      }
    }
    if (noise.s_u > 0.0) {
      StreamRng rng(seed, StreamRng::stream_id(static_cast<std::uint64_t>(q), static_cast<std::uint64_t>(nd)));
      out.u[q] = set.u[q] * (1.0 + noise.s_u * rng.normal());
    }
  }
  return out;
}

double empirical_inner(std::span<const double> v, std::span<const double> w) {
  if (v.size() != w.size()) throw ShapeError("inner product of vectors with different lengths");
  double sum = 0.0;
  for (std::size_t q = 0; q < v.size(); ++q) sum += v[q] * w[q];
  return sum;
}

}  // namespace hdmr
