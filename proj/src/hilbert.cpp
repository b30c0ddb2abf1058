#include "kinlub/hilbert.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "kinlub/errors.hpp"
#include "kinlub/parallel.hpp"

namespace kinlub {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string node_label(const PlanarDomain& d, int i, int j) {
  std::ostringstream s;
  s << " [node (" << i << ", " << j << ") at x = " << d.x(i);
  if (!d.one_dimensional()) s << ", y = " << d.y(j);
  s << "]";
  return s.str();
}

// Re-raises the active exception with `where` appended, keeping its type.
[[noreturn]] void rethrow_at(const std::string& where) {
  try {
    throw;
  } catch (const SolvabilityError& e) {
    throw SolvabilityError(e.what() + where, e.defect());
  } catch (const DivergenceError& e) {
    throw DivergenceError(e.what() + where, e.history());
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(e.what() + where, e.history());
  } catch (const ModelViolation& e) {
    throw ModelViolation(e.what() + where);
  } catch (const RangeError& e) {
    throw RangeError(e.what() + where);
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(e.what() + where);
  }
}

bool interior(const PlanarDomain& d, int i, int j) { return d.type(i, j) == PlanarDomain::Node::interior; }

bool inside_at(const PlanarDomain& d, int i, int j) {
  return i >= 0 && i < d.nx() && j >= 0 && j < d.ny() && d.inside(i, j);
}

// Derivative of a nodal field along one axis: central where both
// neighbours are inside, otherwise one-sided second order, otherwise first order.
double nodal_derivative(const PlanarField& f, int i, int j, bool along_x) {
  const PlanarDomain& d = f.domain;
  if (!along_x && d.one_dimensional()) return 0.0;
  const int di = along_x ? 1 : 0, dj = along_x ? 0 : 1;
  const double h = along_x ? d.hx() : d.hy();
  const auto in = [&](int s) { return inside_at(d, i + s * di, j + s * dj); };
  const auto v = [&](int s) { return f.at(i + s * di, j + s * dj); };
  if (in(-1) && in(1)) return (v(1) - v(-1)) / (2 * h);
  if (in(1) && in(2)) return (4 * (v(1) - v(0)) - (v(2) - v(0))) / (2 * h);
  if (in(-1) && in(-2)) return (4 * (v(0) - v(-1)) - (v(0) - v(-2))) / (2 * h);
  if (in(1)) return (v(1) - v(0)) / h;
  if (in(-1)) return (v(0) - v(-1)) / h;
  return 0.0;
}

// g^1 on the face between (i, j) and its forward neighbour along one axis.
Eigen::MatrixXd face_g1(const ExpansionField& f, int i, int j, bool along_x) {
  const PlanarDomain& d = f.domain();
  const int i2 = along_x ? i + 1 : i, j2 = along_x ? j : j + 1;
  const Eigen::Index a = d.index(i, j), b = d.index(i2, j2);
  const TransportPair& pa = *f.columns[static_cast<std::size_t>(a)];
  const TransportPair& pb = *f.columns[static_cast<std::size_t>(b)];
  const double h = along_x ? d.hx() : d.hy();
  const double normal = (f.density.gamma.values(b) - f.density.gamma.values(a)) / h;
  if (along_x) {
    const double tangential = 0.5 * (f.dgamma_y(a) + f.dgamma_y(b));
    Eigen::MatrixXd out = (-0.5 * normal) * (pa.gx.values / pa.Axx + pb.gx.values / pb.Axx);
    if (tangential != 0.0) out -= (0.5 * tangential) * (pa.gy.values / pa.Ayy + pb.gy.values / pb.Ayy);
    return out;
  }
  const double tangential = 0.5 * (f.dgamma_x(a) + f.dgamma_x(b));
  Eigen::MatrixXd out = (-0.5 * normal) * (pa.gy.values / pa.Ayy + pb.gy.values / pb.Ayy);
  if (tangential != 0.0) out -= (0.5 * tangential) * (pa.gx.values / pa.Axx + pb.gx.values / pb.Axx);
  return out;
}

Eigen::MatrixXd scale_columns(const Eigen::MatrixXd& m, const VelocityFunction& f) {
  return m.array().rowwise() * f.transpose().array();
}

}  // namespace

// ---------------------------------------------------------------------------

TransportCache::TransportCache(const SlabSetup& setup, double quantum) : setup_(setup), quantum_(quantum) {
  if (!(quantum >= 0.0) || !std::isfinite(quantum)) throw InvalidArgument("density quantum must be >= 0");
}

long long TransportCache::key(double rho) const {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw InvalidArgument("density must be positive and finite");
  if (quantum_ > 0.0) return std::llround(rho / quantum_);
  long long bits = 0;
  std::memcpy(&bits, &rho, sizeof bits);
  return bits;
}

double TransportCache::key_density(double rho) const {
  return quantum_ > 0.0 ? static_cast<double>(key(rho)) * quantum_ : rho;
}

std::shared_ptr<const TransportPair> TransportCache::solve(double rho) const {
  const VelocityGrid& grid = setup_.grid();
  const SlabSolver solver(setup_.op, setup_.zgrid, rho);
  auto pair = std::make_shared<TransportPair>();
  pair->rho = rho;
  pair->gx = solver.solve(SlabField::uniform(setup_.zgrid, grid.vx()), setup_.options).solution;
  pair->gy = SlabField(setup_.zgrid, Eigen::MatrixXd(pair->gx.values.rows(), pair->gx.values.cols()));
  const auto& swap = grid.swap_xy();
  for (std::size_t k = 0; k < swap.size(); ++k)
    pair->gy.values.col(static_cast<Eigen::Index>(k)) = pair->gx.values.col(static_cast<Eigen::Index>(swap[k]));
  pair->Axx = z_integral(pair->gx, grid.vx(), grid);
  pair->Ayy = z_integral(pair->gy, grid.vy(), grid);
  if (!(pair->Axx > 0.0)) throw ModelViolation("A(rho) <= 0 at rho = " + std::to_string(rho));
  return pair;
}

void TransportCache::populate(const std::vector<double>& rhos, int threads) {
  std::set<long long> missing;
  for (double r : rhos) {
    const long long k = key(r);
    if (!entries_.count(k)) missing.insert(k);
  }
  const std::vector<long long> keys(missing.begin(), missing.end());
  std::vector<std::shared_ptr<const TransportPair>> solved(keys.size());
  parallel_for(keys.size(), threads, [&](std::size_t n) {
    double rho;
    if (quantum_ > 0.0) {
      rho = static_cast<double>(keys[n]) * quantum_;
    } else {
      std::memcpy(&rho, &keys[n], sizeof rho);
    }
    try {
      solved[n] = solve(rho);
    } catch (...) {
      rethrow_at(" [transport solve at rho = " + std::to_string(rho) + "]");
    }
  });
  for (std::size_t n = 0; n < keys.size(); ++n) entries_[keys[n]] = solved[n];
}

std::shared_ptr<const TransportPair> TransportCache::get(double rho) {
  const long long k = key(rho);
  auto it = entries_.find(k);
  if (it == entries_.end()) it = entries_.emplace(k, solve(key_density(rho))).first;
  return it->second;
}

// ---------------------------------------------------------------------------

ExpansionField build_g1(const DensityField& density, TransportCache& cache, const ExpansionOptions& opts) {
  const PlanarDomain& d = density.rho.domain;
  const SlabSetup& setup = cache.setup();
  const VelocityGrid& grid = setup.grid();
  const auto n = static_cast<std::size_t>(d.size());

  ExpansionField f;
  f.density = density;
  f.setup = setup;
  f.dgamma_x = f.dgamma_y = f.drho_x = f.drho_y = f.column_rho = Eigen::VectorXd::Constant(d.size(), kNaN);
  f.residual1 = f.residual2 = f.compatibility = Eigen::VectorXd::Constant(d.size(), kNaN);
  f.columns.resize(n);
  f.g1.resize(n);
  f.g2.resize(n);

  std::vector<double> rhos;
  for (int i = 0; i < d.nx(); ++i)
    for (int j = 0; j < d.ny(); ++j)
      if (d.inside(i, j)) rhos.push_back(density.rho.at(i, j));
  cache.populate(rhos, opts.threads);

  for (int i = 0; i < d.nx(); ++i)
    for (int j = 0; j < d.ny(); ++j) {
      if (!d.inside(i, j)) continue;
      const Eigen::Index k = d.index(i, j);
      const auto pair = cache.get(density.rho.at(i, j));
      f.columns[static_cast<std::size_t>(k)] = pair;
      f.column_rho(k) = pair->rho;
      f.dgamma_x(k) = nodal_derivative(density.gamma, i, j, true);
      f.dgamma_y(k) = nodal_derivative(density.gamma, i, j, false);
      f.drho_x(k) = f.dgamma_x(k) / pair->Axx;
      f.drho_y(k) = f.dgamma_y(k) / pair->Ayy;
      Eigen::MatrixXd g = -f.drho_x(k) * pair->gx.values;
      if (f.drho_y(k) != 0.0) g -= f.drho_y(k) * pair->gy.values;
      f.g1[static_cast<std::size_t>(k)] = SlabField(setup.zgrid, std::move(g));
    }

  // Residual of v_z d_z g^1 + rho L g^1 = -(v_x d_x rho + v_y d_y rho).
  std::vector<std::pair<int, int>> nodes;
  for (int i = 0; i < d.nx(); ++i)
    for (int j = 0; j < d.ny(); ++j)
      if (interior(d, i, j)) nodes.emplace_back(i, j);
  parallel_for(nodes.size(), opts.threads, [&](std::size_t m) {
    const auto [i, j] = nodes[m];
    const Eigen::Index k = d.index(i, j);
    const VelocityFunction src = -(f.drho_x(k) * grid.vx() + f.drho_y(k) * grid.vy());
    const SlabSolver solver(setup.op, setup.zgrid, f.column_rho(k));
    f.residual1(k) = solver.max_residual(f.g1[static_cast<std::size_t>(k)], SlabField::uniform(setup.zgrid, src)) /
                     std::max(1.0, src.cwiseAbs().maxCoeff());
  });
  return f;
}

std::pair<SlabField, SlabField> g1_derivatives(const ExpansionField& f, int i, int j) {
  const PlanarDomain& d = f.domain();
  if (!interior(d, i, j)) throw InvalidArgument("g1 derivatives are defined on interior nodes only");
  const Eigen::MatrixXd dx = (face_g1(f, i, j, true) - face_g1(f, i - 1, j, true)) / d.hx();
  Eigen::MatrixXd dy = Eigen::MatrixXd::Zero(dx.rows(), dx.cols());
  if (!d.one_dimensional()) dy = (face_g1(f, i, j, false) - face_g1(f, i, j - 1, false)) / d.hy();
  return {SlabField(f.setup.zgrid, dx), SlabField(f.setup.zgrid, std::move(dy))};
}

void build_g2(ExpansionField& f, const ExpansionOptions& opts) {
  const SlabSetup& setup = f.setup;
  const PlanarDomain& d = f.domain();
  const VelocityGrid& grid = setup.grid();
  const VelocityFunction vx = grid.vx(), vy = grid.vy();

  std::vector<std::pair<int, int>> nodes;
  for (int i = 0; i < d.nx(); ++i)
    for (int j = 0; j < d.ny(); ++j)
      if (interior(d, i, j)) nodes.emplace_back(i, j);

  parallel_for(nodes.size(), opts.threads, [&](std::size_t m) {
    const auto [i, j] = nodes[m];
    const auto k = static_cast<std::size_t>(d.index(i, j));
    try {
      const auto [dx, dy] = g1_derivatives(f, i, j);
      const Eigen::MatrixXd& g1 = f.g1[k].values;
      Eigen::MatrixXd src = 2.0 * setup.op->apply_Gamma_rows(g1, g1) - scale_columns(dx.values, vx);
      if (!d.one_dimensional()) src -= scale_columns(dy.values, vy);
      const SlabField source(setup.zgrid, std::move(src));
      f.compatibility(static_cast<Eigen::Index>(k)) = z_integral(source, grid.constant(1.0), grid);
      const SlabSolver solver(setup.op, setup.zgrid, f.column_rho(static_cast<Eigen::Index>(k)));
      f.g2[k] = solver.solve(source, setup.options).solution;
      f.residual2(static_cast<Eigen::Index>(k)) =
          solver.max_residual(f.g2[k], source) / std::max(1.0, source.values.cwiseAbs().maxCoeff());
    } catch (...) {
      rethrow_at(node_label(d, i, j));
    }
  });

  // Boundary columns: linear extrapolation from two filled neighbours along
  // an axis (averaged over the available directions), repeated until every
  // inside node is filled; a single filled neighbour is copied as a last resort.
  std::vector<char> filled(static_cast<std::size_t>(d.size()), 0);
  for (const auto& [i, j] : nodes) filled[static_cast<std::size_t>(d.index(i, j))] = 1;
  std::vector<std::pair<int, int>> dirs = {{1, 0}, {-1, 0}};
  if (!d.one_dimensional()) {
    dirs.emplace_back(0, 1);
    dirs.emplace_back(0, -1);
  }
  const auto is_filled = [&](int i, int j) { return inside_at(d, i, j) && filled[static_cast<std::size_t>(d.index(i, j))]; };
  for (bool progress = true; progress;) {
    progress = false;
    std::vector<std::pair<std::size_t, SlabField>> updates;
    for (int i = 0; i < d.nx(); ++i)
      for (int j = 0; j < d.ny(); ++j) {
        if (!d.inside(i, j) || is_filled(i, j)) continue;
        Eigen::MatrixXd acc;
        int count = 0;
        for (const auto& [di, dj] : dirs) {
          if (!is_filled(i + di, j + dj) || !is_filled(i + 2 * di, j + 2 * dj)) continue;
          const Eigen::MatrixXd e = 2.0 * f.g2[static_cast<std::size_t>(d.index(i + di, j + dj))].values -
                                    f.g2[static_cast<std::size_t>(d.index(i + 2 * di, j + 2 * dj))].values;
          acc = count ? Eigen::MatrixXd(acc + e) : e;
          ++count;
        }
        if (count == 0) {
          for (const auto& [di, dj] : dirs)
            if (is_filled(i + di, j + dj)) {
              acc = f.g2[static_cast<std::size_t>(d.index(i + di, j + dj))].values;
              count = 1;
              break;
            }
        }
        if (count) updates.emplace_back(static_cast<std::size_t>(d.index(i, j)), SlabField(setup.zgrid, acc / count));
      }
    for (auto& [k, g] : updates) {
      f.g2[k] = std::move(g);
      filled[k] = 1;
      progress = true;
    }
  }
  for (int i = 0; i < d.nx(); ++i)
    for (int j = 0; j < d.ny(); ++j)
      if (d.inside(i, j) && !is_filled(i, j)) {
        f.g2[static_cast<std::size_t>(d.index(i, j))] =
            SlabField(setup.zgrid, Eigen::MatrixXd::Zero(setup.zgrid.nodes, static_cast<Eigen::Index>(grid.size())));
      }
  f.has_g2 = true;
}

ExpansionField build_g1(const DensityField& density, const SlabSetup& setup, const ExpansionOptions& opts) {
  TransportCache cache(setup, opts.rho_quantum);
  return build_g1(density, cache, opts);
}

PlanarField mass_flux_divergence(const ExpansionField& f) {
  const PlanarDomain& d = f.domain();
  const VelocityGrid& grid = f.setup.grid();
  const VelocityFunction vx = grid.vx(), vy = grid.vy();
  const auto flux = [&](int i, int j, bool along_x) {
    return z_integral(SlabField(f.setup.zgrid, face_g1(f, i, j, along_x)), along_x ? vx : vy, grid);
  };
  PlanarField out{d, Eigen::VectorXd::Constant(d.size(), kNaN)};
  for (int i = 0; i < d.nx(); ++i)
    for (int j = 0; j < d.ny(); ++j) {
      if (!interior(d, i, j)) continue;
      double div = (flux(i, j, true) - flux(i - 1, j, true)) / d.hx();
      if (!d.one_dimensional()) div += (flux(i, j, false) - flux(i, j - 1, false)) / d.hy();
      out.values(d.index(i, j)) = div;
    }
  return out;
}

std::vector<LateralTrace> boundary_traces(const ExpansionField& f) {
  const PlanarDomain& d = f.domain();
  const VelocityGrid& grid = f.setup.grid();
  std::vector<LateralTrace> out;
  for (int i = 0; i < d.nx(); ++i)
    for (int j = 0; j < d.ny(); ++j) {
      if (d.type(i, j) != PlanarDomain::Node::boundary) continue;
      LateralTrace t;
      t.i = i;
      t.j = j;
      if (!inside_at(d, i - 1, j)) t.normal.x() -= 1.0;
      if (!inside_at(d, i + 1, j)) t.normal.x() += 1.0;
      if (!d.one_dimensional()) {
        if (!inside_at(d, i, j - 1)) t.normal.y() -= 1.0;
        if (!inside_at(d, i, j + 1)) t.normal.y() += 1.0;
      }
      if (t.normal.norm() == 0.0) continue;
      t.normal.normalize();
      t.length = d.one_dimensional() ? 1.0 : std::abs(t.normal.x()) * d.hy() + std::abs(t.normal.y()) * d.hx();
      const auto k = static_cast<std::size_t>(d.index(i, j));
      const VelocityFunction vn = t.normal.x() * grid.vx() + t.normal.y() * grid.vy();
      const VelocityFunction mask = (vn.array() < 0.0).cast<double>();
      t.g1 = SlabField(f.setup.zgrid, scale_columns(f.g1[k].values, mask));
      if (f.has_g2) t.g2 = SlabField(f.setup.zgrid, scale_columns(f.g2[k].values, mask));
      out.push_back(std::move(t));
    }
  return out;
}

double trace_norm(const std::vector<LateralTrace>& traces, int order, const VelocityGrid& grid) {
  if (order != 1 && order != 2) throw InvalidArgument("trace order must be 1 or 2");
  double sum = 0.0;
  for (const LateralTrace& t : traces) {
    const SlabField& g = order == 1 ? t.g1 : t.g2;
    if (g.values.size() == 0) throw InvalidArgument("trace of g2 requested before g2 was built");
    const VelocityFunction vn = (t.normal.x() * grid.vx() + t.normal.y() * grid.vy()).cwiseAbs();
    const Eigen::VectorXd per_z = g.values.cwiseAbs2() * grid.weights().cwiseProduct(vn);
    sum += t.length * g.zgrid.trapezoid().dot(per_z);
  }
  return std::sqrt(sum);
}

double max_expansion_residual(const ExpansionField& f, int order) {
  if (order != 1 && order != 2) throw InvalidArgument("residual order must be 1 or 2");
  if (order == 2 && !f.has_g2) throw InvalidArgument("g2 has not been built");
  const Eigen::VectorXd& r = order == 1 ? f.residual1 : f.residual2;
  double worst = 0.0;
  for (Eigen::Index k = 0; k < r.size(); ++k)
    if (std::isfinite(r(k))) worst = std::max(worst, r(k));
  return worst;
}

void write_expansion_csv(const std::string& path, const ExpansionField& f) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  const PlanarDomain& d = f.domain();
  const VelocityGrid& grid = f.setup.grid();
  out << "x,y,rho,drho_x,drho_y,norm_g1,norm_g2,residual1,residual2,compatibility\n" << std::setprecision(12);
  for (int i = 0; i < d.nx(); ++i)
    for (int j = 0; j < d.ny(); ++j) {
      if (!d.inside(i, j)) continue;
      const Eigen::Index k = d.index(i, j);
      const auto s = static_cast<std::size_t>(k);
      out << d.x(i) << ',' << (d.one_dimensional() ? 0.0 : d.y(j)) << ',' << f.density.rho.values(k) << ','
          << f.drho_x(k) << ',' << f.drho_y(k) << ',' << slab_norm(f.g1[s], grid) << ','
          << (f.has_g2 ? slab_norm(f.g2[s], grid) : kNaN) << ',' << f.residual1(k) << ',' << f.residual2(k) << ','
          << f.compatibility(k) << '\n';
    }
}

void write_expansion_binary(const std::string& path, const ExpansionField& f, int order) {
  if (order != 1 && order != 2) throw InvalidArgument("binary dump order must be 1 or 2");
  if (order == 2 && !f.has_g2) throw InvalidArgument("g2 has not been built");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path);
  const PlanarDomain& d = f.domain();
  const std::int64_t header[4] = {d.nx(), d.ny(), f.setup.zgrid.nodes,
                                  static_cast<std::int64_t>(f.setup.grid().size())};
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  const auto& fields = order == 1 ? f.g1 : f.g2;
  std::vector<double> row(static_cast<std::size_t>(header[3]));
  for (int i = 0; i < d.nx(); ++i)
    for (int j = 0; j < d.ny(); ++j) {
      const SlabField& g = fields[static_cast<std::size_t>(d.index(i, j))];
      for (int z = 0; z < header[2]; ++z) {
        for (std::size_t v = 0; v < row.size(); ++v)
          row[v] = d.inside(i, j) ? g.values(z, static_cast<Eigen::Index>(v)) : 0.0;
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
      }
    }
}

void to_json(nlohmann::json& j, const ExpansionField& f) {
  const auto finite_max = [](const Eigen::VectorXd& v) {
    double m = 0.0;
    for (Eigen::Index k = 0; k < v.size(); ++k)
      if (std::isfinite(v(k))) m = std::max(m, std::abs(v(k)));
    return m;
  };
  const auto traces = boundary_traces(f);
  const VelocityGrid& grid = f.setup.grid();
  std::size_t distinct = 0;
  {
    std::set<const TransportPair*> seen;
    for (const auto& c : f.columns)
      if (c) seen.insert(c.get());
    distinct = seen.size();
  }
  j = nlohmann::json{{"nodes", f.domain().interior_count() + f.domain().boundary_count()},
                     {"distinct_column_solves", distinct},
                     {"max_residual_order1", max_expansion_residual(f, 1)},
                     {"max_drho", std::max(finite_max(f.drho_x), finite_max(f.drho_y))},
                     {"trace_norm_g1", trace_norm(traces, 1, grid)},
                     {"has_g2", f.has_g2}};
  if (f.has_g2) {
    j["max_residual_order2"] = max_expansion_residual(f, 2);
    j["max_compatibility_defect"] = finite_max(f.compatibility);
    j["trace_norm_g2"] = trace_norm(traces, 2, grid);
  }
}

}  // namespace kinlub
