#include "pstab/linearization.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace pstab {

void StateSpaceModel::validate() const {
  const auto n = a.rows();
  auto bad = [](const std::string& m) { return Error(ErrorCode::InvalidArgument, "state-space model: " + m); };
  if (a.cols() != n) throw bad("A is not square");
  if (b.rows() != n || c.cols() != n) throw bad("B/C dimensions do not match A");
  if (d.rows() != c.rows() || d.cols() != b.cols()) throw bad("D dimensions do not match C and B");
  if (static_cast<Eigen::Index>(state_labels.size()) != n ||
      static_cast<Eigen::Index>(input_labels.size()) != b.cols() ||
      static_cast<Eigen::Index>(output_labels.size()) != c.rows())
    throw bad("label counts do not match matrix dimensions");
  for (const auto* labels : {&state_labels, &input_labels, &output_labels}) {
    std::set<std::string> seen(labels->begin(), labels->end());
    if (seen.size() != labels->size()) throw bad("duplicate label");
  }
}

StateSpaceModel StateSpaceModel::siso(const std::string& input, const std::string& output) const {
  const auto i = static_cast<Eigen::Index>(index_of(input_labels, input, "input"));
  const auto o = static_cast<Eigen::Index>(index_of(output_labels, output, "output"));
  StateSpaceModel s;
  s.a = a;
  s.b = b.col(i);
  s.c = c.row(o);
  s.d = d.block(o, i, 1, 1);
  s.state_labels = state_labels;
  s.input_labels = {input};
  s.output_labels = {output};
  return s;
}

Jacobians numeric_jacobians(const Dae& dae, const DaePoint& p, double rel_step) {
  dae.check_dims(p.x, p.y, p.u);
  const auto nx = p.x.size(), ny = p.y.size(), nu = p.u.size();
  const auto nz = static_cast<Eigen::Index>(dae.num_outputs());
  Jacobians j;
  j.fx.resize(nx, nx);
  j.gx.resize(ny, nx);
  j.hx.resize(nz, nx);
  j.fy.resize(nx, ny);
  j.gy.resize(ny, ny);
  j.hy.resize(nz, ny);
  j.fu.resize(nx, nu);
  j.gu.resize(ny, nu);
  j.hu.resize(nz, nu);

  Vec f1, g1, z1, f2, g2, z2;
  // which: 0 = x, 1 = y, 2 = u
  auto column = [&](int which, Eigen::Index k, Mat& df, Mat& dg, Mat& dh) {
    DaePoint q = p;
    Vec& v = which == 0 ? q.x : which == 1 ? q.y : q.u;
    const double base = v[k];
    const double h = rel_step * std::max(1.0, std::abs(base));
    v[k] = base + h;
    dae.residual(q.x, q.y, q.u, f1, g1);
    dae.outputs(q.x, q.y, q.u, z1);
    v[k] = base - h;
    dae.residual(q.x, q.y, q.u, f2, g2);
    dae.outputs(q.x, q.y, q.u, z2);
    const double inv = 1.0 / (2.0 * h);
    df.col(k) = (f1 - f2) * inv;
    dg.col(k) = (g1 - g2) * inv;
    dh.col(k) = (z1 - z2) * inv;
  };
  for (Eigen::Index k = 0; k < nx; ++k) column(0, k, j.fx, j.gx, j.hx);
  for (Eigen::Index k = 0; k < ny; ++k) column(1, k, j.fy, j.gy, j.hy);
  for (Eigen::Index k = 0; k < nu; ++k) column(2, k, j.fu, j.gu, j.hu);
  return j;
}

namespace {

std::vector<Eigen::Index> select(const Labels& all, const Labels& wanted, const char* what) {
  std::vector<Eigen::Index> idx;
  for (const auto& w : wanted) idx.push_back(static_cast<Eigen::Index>(index_of(all, w, what)));
  return idx;
}

}  // namespace

StateSpaceModel reduce_jacobians(const Jacobians& j, const Dae& dae, const Labels& inputs, const Labels& outputs) {
  const auto in_idx = select(dae.input_labels(), inputs, "input");
  const auto out_idx = select(dae.output_labels(), outputs, "output");
  const auto nx = j.fx.rows();
  const auto ny = j.gy.rows();
  const auto nu = static_cast<Eigen::Index>(in_idx.size());
  const auto nz = static_cast<Eigen::Index>(out_idx.size());

  Mat fu(nx, nu), gu(ny, nu), hu(nz, nu), hx(nz, nx), hy(nz, ny);
  for (Eigen::Index c = 0; c < nu; ++c) {
    fu.col(c) = j.fu.col(in_idx[c]);
    gu.col(c) = j.gu.col(in_idx[c]);
  }
  for (Eigen::Index r = 0; r < nz; ++r) {
    hx.row(r) = j.hx.row(out_idx[r]);
    hy.row(r) = j.hy.row(out_idx[r]);
    for (Eigen::Index c = 0; c < nu; ++c) hu(r, c) = j.hu(out_idx[r], in_idx[c]);
  }

  StateSpaceModel ss;
  ss.state_labels = dae.state_labels();
  ss.input_labels = inputs;
  ss.output_labels = outputs;
  if (ny == 0) {
    ss.a = j.fx;
    ss.b = fu;
    ss.c = hx;
    ss.d = hu;
    return ss;
  }
  Eigen::FullPivLU<Mat> lu(j.gy);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    const Mat ker = lu.kernel();
    std::string names;
    const double top = ker.col(0).cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < ker.rows(); ++i) {
      if (std::abs(ker(i, 0)) >= 0.1 * top) {
        if (!names.empty()) names += ", ";
        names += dae.algebraic_labels()[static_cast<std::size_t>(i)];
      }
    }
    throw Error(ErrorCode::Singular, "algebraic Jacobian g_y is singular; near-singular subset: " + names);
  }
  Mat rhs(ny, nx + nu);
  rhs << j.gx, gu;
  const Mat sol = lu.solve(rhs);  // g_y^-1 [g_x g_u]
  const Mat gx_red = sol.leftCols(nx);
  const Mat gu_red = sol.rightCols(nu);
  ss.a = j.fx - j.fy * gx_red;
  ss.b = fu - j.fy * gu_red;
  ss.c = hx - hy * gx_red;
  ss.d = hu - hy * gu_red;
  return ss;
}

StateSpaceModel linearize(const Dae& dae, const DaePoint& p, const Labels& inputs, const Labels& outputs,
                          const LinearizeOptions& opt) {
  // Validate labels before any work.
  select(dae.input_labels(), inputs, "input");
  select(dae.output_labels(), outputs, "output");
  Vec f, g;
  dae.residual(p.x, p.y, p.u, f, g);
  const double res = std::max(f.size() ? f.cwiseAbs().maxCoeff() : 0.0, g.size() ? g.cwiseAbs().maxCoeff() : 0.0);
  if (res > opt.equilibrium_tol) {
    std::ostringstream os;
    os << "refusing to linearize: point is not an equilibrium (residual " << res << ")";
    throw Error(ErrorCode::Numeric, os.str());
  }
  if (!opt.allow_active_limiters) {
    const auto lim = dae.active_limiters(p.x, p.y, p.u);
    if (!lim.empty()) throw Error(ErrorCode::Numeric, "refusing to linearize: limiter active at " + lim.front());
  }
  return reduce_jacobians(numeric_jacobians(dae, p, opt.rel_step), dae, inputs, outputs);
}

std::shared_ptr<const FrozenStateDae> frozen_shaft_dae(std::shared_ptr<const GridDae> dae, const DaePoint& p) {
  const auto shaft = dae->shaft_states();
  Vec values(static_cast<Eigen::Index>(shaft.size()));
  for (std::size_t i = 0; i < shaft.size(); ++i) values[static_cast<Eigen::Index>(i)] = p.x[shaft[i]];
  return std::make_shared<const FrozenStateDae>(std::move(dae), shaft, values);
}

StateSpaceModel frozen_shaft_linearize(const GridDae& dae, const DaePoint& p, const std::string& gen,
                                       const LinearizeOptions& opt) {
  const auto& m = dae.model().machine(gen);
  if (!m.avr) throw Error(ErrorCode::InvalidArgument, gen + " has no AVR");
  auto frozen = frozen_shaft_dae(std::make_shared<const GridDae>(dae), p);
  DaePoint q{frozen->reduce(p.x), p.y, p.u};
  return linearize(*frozen, q, {gen + ".Vref"}, {gen + ".P"}, opt);
}

// ---------------------------------------------------------------------------
// IO

namespace {

void write_matrix(std::ostream& os, const char* name, const Mat& m) {
  os << '#' << name << ',' << m.rows() << ',' << m.cols() << '\n';
  char buf[32];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      if (c) os << ',';
      os << buf;
    }
    os << '\n';
  }
}

void write_labels(std::ostream& os, const char* name, const Labels& l) {
  os << '#' << name << ',' << l.size() << '\n';
  for (const auto& s : l) os << s << '\n';
}

Error parse_error(int line, const std::string& msg) {
  return Error(ErrorCode::Parse, "state-space file line " + std::to_string(line) + ": " + msg);
}

}  // namespace

void write_state_space(std::ostream& os, const StateSpaceModel& ss) {
  ss.validate();
  os << "#pstab-statespace,1\n";
  write_labels(os, "states", ss.state_labels);
  write_labels(os, "inputs", ss.input_labels);
  write_labels(os, "outputs", ss.output_labels);
  write_matrix(os, "A", ss.a);
  write_matrix(os, "B", ss.b);
  write_matrix(os, "C", ss.c);
  write_matrix(os, "D", ss.d);
}

StateSpaceModel read_state_space(std::istream& is) {
  StateSpaceModel ss;
  std::string line;
  int lineno = 0;
  auto next = [&]() -> bool {
    while (std::getline(is, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    return false;
  };
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    return out;
  };
  if (!next() || line.rfind("#pstab-statespace", 0) != 0) throw parse_error(lineno, "missing #pstab-statespace header");
  bool got[7] = {};
  while (next()) {
    if (line[0] != '#') throw parse_error(lineno, "expected a block header");
    const auto head = split(line.substr(1));
    const std::string& name = head[0];
    auto count = [&](std::size_t i) -> long {
      if (head.size() <= i) throw parse_error(lineno, "block header missing dimension");
      try {
        return std::stol(head[i]);
      } catch (const std::exception&) {
        throw parse_error(lineno, "bad dimension '" + head[i] + "'");
      }
    };
    if (name == "states" || name == "inputs" || name == "outputs") {
      Labels& l = name == "states" ? ss.state_labels : name == "inputs" ? ss.input_labels : ss.output_labels;
      const long n = count(1);
      for (long i = 0; i < n; ++i) {
        if (!next()) throw parse_error(lineno, "unexpected end of file in " + name);
        l.push_back(line);
      }
      got[name == "states" ? 0 : name == "inputs" ? 1 : 2] = true;
    } else if (name == "A" || name == "B" || name == "C" || name == "D") {
      const long r = count(1), c = count(2);
      Mat m(r, c);
      for (long i = 0; i < r; ++i) {
        if (!next()) throw parse_error(lineno, "unexpected end of file in block " + name);
        const auto cells = split(line);
        if (static_cast<long>(cells.size()) != c) throw parse_error(lineno, "expected " + std::to_string(c) + " values");
        for (long k = 0; k < c; ++k) {
          try {
            m(i, k) = std::stod(cells[static_cast<std::size_t>(k)]);
          } catch (const std::exception&) {
            throw parse_error(lineno, "bad number '" + cells[static_cast<std::size_t>(k)] + "'");
          }
        }
      }
      (name == "A" ? ss.a : name == "B" ? ss.b : name == "C" ? ss.c : ss.d) = m;
      got[3 + (name[0] - 'A')] = true;
    } else {
      throw parse_error(lineno, "unknown block '" + name + "'");
    }
  }
  for (bool g : got)
    if (!g) throw Error(ErrorCode::Parse, "state-space file is missing a block");
  ss.validate();
  return ss;
}

void save_state_space(const std::string& path, const StateSpaceModel& ss) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path);
  write_state_space(os, ss);
}

StateSpaceModel load_state_space(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::Io, "cannot read " + path);
  return read_state_space(is);
}

}  // namespace pstab
