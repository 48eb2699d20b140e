#include "smcf/flow.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "smcf/errors.hpp"

namespace smcf {

void FlowConfig::validate() const {
  if (!(dt_safety > 0.0 && dt_safety <= 1.0)) throw std::invalid_argument("dt_safety must lie in (0, 1]");
  if (max_steps < 0) throw std::invalid_argument("max_steps must be non-negative");
  if (!(H_blowup_factor > 0.0)) throw std::invalid_argument("H_blowup_factor must be positive");
  if (!(min_det > 0.0)) throw std::invalid_argument("min_det must be positive");
  if (!(time_horizon > 0.0)) throw std::invalid_argument("time_horizon must be positive");
  if (record_every < 1) throw std::invalid_argument("record_every must be at least 1");
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::MaxSteps: return "max_steps";
    case StopReason::TimeHorizon: return "time_horizon";
    case StopReason::CurvatureBlowup: return "curvature_blowup";
    case StopReason::DegenerateMetric: return "degenerate_metric";
    case StopReason::Error: return "error";
  }
  return "?";
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// Central weights without the 1/h factors, offsets -w..w.
std::vector<double> central_first(int order) {
  if (order == 4) return {1.0 / 12, -8.0 / 12, 0.0, 8.0 / 12, -1.0 / 12};
  return {-0.5, 0.0, 0.5};
}

std::vector<double> central_second(int order) {
  if (order == 4) return {-1.0 / 12, 16.0 / 12, -30.0 / 12, 16.0 / 12, -1.0 / 12};
  return {1.0, -2.0, 1.0};
}

// Normal part of g^ij (F_ij + Gamma(F_i, F_j)); also reports det g and the smaller scaled spacing.
inline Vec4 project_mean_curvature(const Mat4* g, const Vec4& Fu, const Vec4& Fv, const Vec4& Nuu, const Vec4& Nuv,
                                   const Vec4& Nvv, double hu2, double hv2, double& det, double& spacing) {
  const Vec4 gFu = g ? Vec4(*g * Fu) : Fu;
  const Vec4 gFv = g ? Vec4(*g * Fv) : Fv;
  const double guu = Fu.dot(gFu), guv = Fu.dot(gFv), gvv = Fv.dot(gFv);
  det = guu * gvv - guv * guv;
  spacing = std::min(hu2 * guu, hv2 * gvv);
  if (!(det > 0.0)) return Vec4::Constant(std::numeric_limits<double>::quiet_NaN());
  const double iuu = gvv / det, iuv = -guv / det, ivv = guu / det;
  const Vec4 T = iuu * Nuu + 2.0 * iuv * Nuv + ivv * Nvv;
  const double tu = gFu.dot(T), tv = gFv.dot(T);
  return T - (iuu * tu + iuv * tv) * Fu - (iuv * tu + ivv * tv) * Fv;
}

double metric_norm(const AmbientModel& model, const ChartPoint& p, const Vec4& v) {
  if (model.is_flat()) return v.norm();
  return std::sqrt(v.dot(model.metric_at(p).g * v));
}

}  // namespace

FlowStepper::FlowStepper(const AmbientModel& model, const GridSpec& grid) : model_(model), table_(grid) {
  fast_ = model.is_flat() && model.chart_count() == 1;
  if (!fast_) return;
  width_ = grid.stencil_order / 2;
  const int S = 2 * width_ + 1;
  const int n = grid.nu * grid.nv;
  box_.assign(static_cast<std::size_t>(n * S * S), -1);
  SurfacePatch probe;
  probe.grid = grid;
  for (int node = 0; node < n; ++node) {
    const int i = node / grid.nv, j = node % grid.nv;
    if (grid.mode == BoundaryMode::DirichletFrozen && (i == 0 || j == 0 || i == grid.nu - 1 || j == grid.nv - 1))
      continue;
    for (int a = -width_; a <= width_; ++a)
      for (int b = -width_; b <= width_; ++b)
        box_[static_cast<std::size_t>(node * S * S + (a + width_) * S + (b + width_))] =
            table_.neighbour(node, a, b).node;
  }
  d1_ = central_first(grid.stencil_order);
  d2_ = central_second(grid.stencil_order);
}

void FlowStepper::mean_curvature(const SurfacePatch& patch, std::vector<Vec4>& H, double& min_det,
                                 double& min_spacing_sq) const {
  if (!fast_) {
    H = mean_curvature_vectors(model_, patch, table_, &min_det, &min_spacing_sq);
    return;
  }
  const GridSpec& grid = table_.grid();
  const int n = patch.size();
  const int w = width_, S = 2 * w + 1;
  const double hu = grid.hu(), hv = grid.hv();
  const double hu2 = hu * hu, hv2 = hv * hv;
  H.assign(static_cast<std::size_t>(n), Vec4::Zero());
  min_det = min_spacing_sq = std::numeric_limits<double>::infinity();
  const auto& nodes = patch.nodes;
  for (int node = 0; node < n; ++node) {
    const int* nb = &box_[static_cast<std::size_t>(node * S * S)];
    if (nb[w * S + w] < 0) continue;  // frozen boundary node
    Vec4 Fu = Vec4::Zero(), Fv = Vec4::Zero(), Fuu = Vec4::Zero(), Fvv = Vec4::Zero(), Fuv = Vec4::Zero();
    for (int a = 0; a < S; ++a) {
      const Vec4& xu = nodes[static_cast<std::size_t>(nb[a * S + w])].x;
      const Vec4& xv = nodes[static_cast<std::size_t>(nb[w * S + a])].x;
      Fu += d1_[static_cast<std::size_t>(a)] * xu;
      Fuu += d2_[static_cast<std::size_t>(a)] * xu;
      Fv += d1_[static_cast<std::size_t>(a)] * xv;
      Fvv += d2_[static_cast<std::size_t>(a)] * xv;
      if (a == w) continue;
      Vec4 row = Vec4::Zero();
      for (int b = 0; b < S; ++b) {
        if (b == w) continue;
        row += d1_[static_cast<std::size_t>(b)] * nodes[static_cast<std::size_t>(nb[a * S + b])].x;
      }
      Fuv += d1_[static_cast<std::size_t>(a)] * row;
    }
    Fu /= hu;
    Fv /= hv;
    Fuu /= hu2;
    Fvv /= hv2;
    Fuv /= hu * hv;
    double det = 0.0, spacing = 0.0;
    H[static_cast<std::size_t>(node)] = project_mean_curvature(nullptr, Fu, Fv, Fuu, Fuv, Fvv, hu2, hv2, det, spacing);
    min_det = std::min(min_det, det);
    min_spacing_sq = std::min(min_spacing_sq, spacing);
  }
}

namespace {

SurfacePatch advance(const AmbientModel& model, const SurfacePatch& patch, const std::vector<Vec4>& H, double dt,
                     long step_index) {
  SurfacePatch next = patch;
  const bool multi = model.chart_count() > 1;
  for (int k = 0; k < next.size(); ++k) {
    if (patch.is_boundary(k)) continue;
    ChartPoint& p = next.nodes[static_cast<std::size_t>(k)];
    p.x += dt * H[static_cast<std::size_t>(k)];
    if (multi) p = model.best_chart(p);
    if (!model.in_domain(p)) throw FlowError(static_cast<int>(step_index), "node " + std::to_string(k) + " left every chart domain");
  }
  return next;
}

double max_metric_H(const AmbientModel& model, const SurfacePatch& patch, const std::vector<Vec4>& H) {
  double m = 0.0;
  for (int k = 0; k < patch.size(); ++k) {
    if (patch.is_boundary(k)) continue;
    m = std::max(m, metric_norm(model, patch.nodes[static_cast<std::size_t>(k)], H[static_cast<std::size_t>(k)]));
  }
  return m;
}

}  // namespace

StepResult FlowStepper::step(const SurfacePatch& patch, const FlowConfig& config, long step_index,
                             double dt_cap) const {
  std::vector<Vec4> H;
  double min_det = 0.0, spacing = 0.0;
  mean_curvature(patch, H, min_det, spacing);
  if (!(min_det > config.min_det))
    throw FlowError(static_cast<int>(step_index), "induced metric degenerate (min det g = " + fmt(min_det) + ")");
  const double dt = std::min(config.dt_safety * spacing / 4.0, dt_cap);
  if (!(dt >= 1e-12)) throw FlowError(static_cast<int>(step_index), "time step underflow (dt = " + fmt(dt) + ")");
  StepResult r;
  r.dt = dt;
  r.min_det = min_det;
  r.max_H = max_metric_H(model_, patch, H);
  r.patch = advance(model_, patch, H, dt, step_index);
  return r;
}

StepResult step(const SurfacePatch& patch, const AmbientModel& model, const FlowConfig& config) {
  config.validate();
  return FlowStepper(model, patch.grid).step(patch, config, 0);
}

DiagnosticsRow diagnose(const AmbientModel& model, const SurfacePatch& patch, const StencilTable& table) {
  const PatchGeometry geo = compute_geometry(model, patch, table);
  DiagnosticsRow row;
  row.area = geo.area;
  row.min_cos = row.min_cos_interior = std::numeric_limits<double>::infinity();
  row.max_cos = -std::numeric_limits<double>::infinity();
  const bool bounded = patch.grid.mode == BoundaryMode::DirichletFrozen;
  if (bounded) row.min_cos_boundary = std::numeric_limits<double>::infinity();
  for (int k = 0; k < patch.size(); ++k) {
    const NodeGeometry& ng = geo.nodes[static_cast<std::size_t>(k)];
    const double c = ng.frame.cos_alpha;
    row.min_cos = std::min(row.min_cos, c);
    row.max_cos = std::max(row.max_cos, c);
    if (patch.is_boundary(k)) {
      row.min_cos_boundary = std::min(row.min_cos_boundary, c);
      continue;
    }
    row.min_cos_interior = std::min(row.min_cos_interior, c);
    row.max_H = std::max(row.max_H, std::sqrt(mean_curvature_sq(ng.sff)));
    row.max_nabla_J_sq = std::max(row.max_nabla_J_sq, ng.nabla_J_sq);
  }
  return row;
}

Trajectory run(const SurfacePatch& initial, const AmbientModel& model, const FlowConfig& config) {
  config.validate();
  const FlowStepper stepper(model, initial.grid);
  Trajectory t;
  SurfacePatch patch = initial;
  double time = 0.0;
  double H0 = -1.0;
  std::vector<Vec4> H;
  long n = 0;
  auto finish = [&](StopReason why, const std::string& msg) {
    t.stop = why;
    t.message = msg;
  };
  try {
    for (;; ++n) {
      if (n >= config.max_steps) {
        finish(StopReason::MaxSteps, "reached max_steps");
        break;
      }
      const double remaining = config.time_horizon - time;
      if (std::isfinite(remaining) && remaining <= 1e-14 * std::max(1.0, config.time_horizon)) {
        finish(StopReason::TimeHorizon, "reached the time horizon");
        break;
      }
      double min_det = 0.0, spacing = 0.0;
      stepper.mean_curvature(patch, H, min_det, spacing);
      if (!(min_det > config.min_det)) {
        finish(StopReason::DegenerateMetric, "min det g = " + fmt(min_det) + " at step " + std::to_string(n));
        break;
      }
      const double maxH = max_metric_H(model, patch, H);
      if (H0 < 0.0) H0 = maxH;
      if (maxH > config.H_blowup_factor * (H0 + 1.0)) {
        finish(StopReason::CurvatureBlowup, "max |H| = " + fmt(maxH) + " at step " + std::to_string(n));
        break;
      }
      const double dt = std::min(config.dt_safety * spacing / 4.0, remaining);
      if (!(dt >= 1e-12) && dt != remaining)
        throw FlowError(static_cast<int>(n), "time step underflow (dt = " + fmt(dt) + ")");
      SurfacePatch next = advance(model, patch, H, dt, n);
      if (n % config.record_every == 0) {
        DiagnosticsRow row = diagnose(model, patch, stepper.table());
        row.step = n;
        row.time = time;
        t.diagnostics.push_back(row);
        t.records.push_back(Record{n, time, dt, patch, next});
      }
      patch = std::move(next);
      time += dt;
    }
  } catch (const FlowError& e) {
    finish(StopReason::Error, e.what());
  } catch (const DomainError& e) {
    finish(StopReason::Error, "step " + std::to_string(n) + ": " + e.what());
  } catch (const ImmersionError& e) {
    finish(StopReason::Error, "step " + std::to_string(n) + ": " + e.what());
  }
  t.steps = n;
  t.final_time = time;
  try {
    DiagnosticsRow row = diagnose(model, patch, stepper.table());
    row.step = n;
    row.time = time;
    t.diagnostics.push_back(row);
  } catch (const std::exception& e) {
    if (t.stop != StopReason::Error && t.stop != StopReason::DegenerateMetric) finish(StopReason::Error, e.what());
  }
  t.final_patch = std::move(patch);
  return t;
}

int area_increase_count(const Trajectory& t, double rel_tol) {
  if (t.diagnostics.empty()) return 0;
  const double a0 = t.diagnostics.front().area;
  int count = 0;
  for (std::size_t i = 1; i < t.diagnostics.size(); ++i)
    if (t.diagnostics[i].area > t.diagnostics[i - 1].area + rel_tol * a0) ++count;
  return count;
}

// ---------------------------------------------------------------- residuals

bool residual_node(const GridSpec& grid, int node, const ResidualOptions& options) {
  if (grid.mode != BoundaryMode::DirichletFrozen) return true;
  const int i = node / grid.nv, j = node % grid.nv;
  const int m = std::max(1, options.boundary_margin);
  return i >= m && j >= m && i <= grid.nu - 1 - m && j <= grid.nv - 1 - m;
}

namespace {

struct StateTerms {
  std::vector<double> c, lap, reaction, sin_sq, ric;
};

StateTerms state_terms(const AmbientModel& model, const SurfacePatch& patch, const StencilTable& table) {
  GeometryOptions opt;
  opt.curvature = !model.is_flat();
  const PatchGeometry geo = compute_geometry(model, patch, table, opt);
  StateTerms s;
  const std::size_t n = geo.nodes.size();
  s.c.resize(n);
  s.reaction.resize(n);
  s.sin_sq.resize(n);
  s.ric.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const NodeGeometry& ng = geo.nodes[k];
    const double c = ng.frame.cos_alpha, sn = ng.frame.sin_alpha;
    s.c[k] = c;
    s.sin_sq[k] = sn * sn;
    s.ric[k] = sn * sn * ng.ric_Je1_e2;
    s.reaction[k] = ng.nabla_J_sq * c + s.ric[k];
  }
  s.lap = surface_laplacian(geo, table, s.c);
  return s;
}

}  // namespace

ResidualField evolution_residual(const AmbientModel& model, const Record& record, const ResidualOptions& options) {
  const StencilTable table(record.before.grid);
  const StateTerms s0 = state_terms(model, record.before, table);
  const StateTerms s1 = state_terms(model, record.after, table);
  const std::size_t n = s0.c.size();
  ResidualField r;
  r.values.assign(n, std::numeric_limits<double>::quiet_NaN());
  r.sin_sq.assign(n, 0.0);
  r.ric_term.assign(n, 0.0);
  double sum_sq = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    r.sin_sq[k] = 0.5 * (s0.sin_sq[k] + s1.sin_sq[k]);
    r.ric_term[k] = 0.5 * (s0.ric[k] + s1.ric[k]);
    if (!residual_node(record.before.grid, static_cast<int>(k), options)) continue;
    const double v = (s1.c[k] - s0.c[k]) / record.dt - 0.5 * (s0.lap[k] + s0.reaction[k] + s1.lap[k] + s1.reaction[k]);
    r.values[k] = v;
    r.max_abs = std::max(r.max_abs, std::abs(v));
    sum_sq += v * v;
    ++r.count;
  }
  r.rms = r.count ? std::sqrt(sum_sq / r.count) : 0.0;
  return r;
}

ResidualField evolution_residual(const AmbientModel& model, const Trajectory& t, std::size_t record_index,
                                 const ResidualOptions& options) {
  if (record_index >= t.records.size()) throw std::out_of_range("no recorded state pair at that index");
  return evolution_residual(model, t.records[record_index], options);
}

InequalityReport inequality_check(const AmbientModel& model, const Trajectory& t, const ThresholdProfile& profile,
                                  double tol_disc, const ResidualOptions& options) {
  InequalityReport rep;
  rep.hypothesis_met = profile.hypothesis_met;
  rep.note = profile.hypothesis_met ? "" : "hypothesis violated: " + profile.note;
  rep.C = profile.hypothesis_met ? profile.C : 0.0;
  std::vector<ResidualField> fields;
  fields.reserve(t.records.size());
  double max_res = 0.0;
  for (const Record& rec : t.records) {
    fields.push_back(evolution_residual(model, rec, options));
    max_res = std::max(max_res, fields.back().max_abs);
  }
  // Floor at rounding level so exactly stationary runs are not flagged by noise.
  rep.tol_disc = tol_disc >= 0.0 ? tol_disc : std::max(3.0 * max_res, 1e-12);
  for (std::size_t r = 0; r < fields.size(); ++r) {
    const ResidualField& f = fields[r];
    InequalityRecord ir;
    ir.step = t.records[r].step;
    ir.time = t.records[r].time;
    ir.max_abs_residual = f.max_abs;
    ir.min_slack = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < f.values.size(); ++k) {
      if (std::isnan(f.values[k])) continue;
      const double slack = f.values[k] + f.ric_term[k] - rep.C * f.sin_sq[k];
      ir.min_slack = std::min(ir.min_slack, slack);
      if (slack < -rep.tol_disc) {
        ++ir.flagged;
        ++rep.total_flagged;
        if (rep.flagged.size() < 100) rep.flagged.push_back({r, static_cast<int>(k), slack});
      }
    }
    rep.records.push_back(ir);
  }
  return rep;
}

MonotonicityReport monotonicity_report(const Trajectory& t, double tol) {
  MonotonicityReport m;
  const bool bounded = !t.records.empty() ? t.records.front().before.grid.mode == BoundaryMode::DirichletFrozen
                                          : t.final_patch.grid.mode == BoundaryMode::DirichletFrozen;
  for (const DiagnosticsRow& row : t.diagnostics) {
    m.times.push_back(row.time);
    m.interior_min.push_back(row.min_cos_interior);
    if (bounded) m.boundary_min.push_back(row.min_cos_boundary);
  }
  for (std::size_t i = 1; i < m.interior_min.size(); ++i)
    m.worst_drop = std::max(m.worst_drop, m.interior_min[i - 1] - m.interior_min[i]);
  m.passed = m.interior_min.size() >= 2 && m.worst_drop <= tol;
  return m;
}

void write_diagnostics_csv(std::ostream& os, const Trajectory& t) {
  os << "step,time,area,min_cos,max_cos,min_cos_interior,min_cos_boundary,max_H,max_nabla_J_sq\n";
  for (const DiagnosticsRow& r : t.diagnostics) {
    os << r.step << ',' << format_double(r.time) << ',' << format_double(r.area) << ',' << format_double(r.min_cos)
       << ',' << format_double(r.max_cos) << ',' << format_double(r.min_cos_interior) << ','
       << (std::isnan(r.min_cos_boundary) ? std::string("NA") : format_double(r.min_cos_boundary)) << ','
       << format_double(r.max_H) << ',' << format_double(r.max_nabla_J_sq) << '\n';
  }
}

void write_state_csv(std::ostream& os, const AmbientModel& model, const SurfacePatch& patch) {
  const PatchGeometry geo = compute_geometry(model, patch);
  os << "node,i,j,chart,x0,x1,x2,x3,cos_alpha,H_norm,nabla_J_sq\n";
  for (int k = 0; k < patch.size(); ++k) {
    const NodeGeometry& ng = geo.nodes[static_cast<std::size_t>(k)];
    os << k << ',' << k / patch.grid.nv << ',' << k % patch.grid.nv << ',' << ng.point.chart;
    for (int c = 0; c < 4; ++c) os << ',' << format_double(ng.point.x[c]);
    os << ',' << format_double(ng.frame.cos_alpha) << ',' << format_double(std::sqrt(mean_curvature_sq(ng.sff)))
       << ',' << format_double(ng.nabla_J_sq) << '\n';
  }
}

}  // namespace smcf
