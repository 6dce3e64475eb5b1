#include "eigenclt/sde_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "eigenclt/csv_io.hpp"
#include "eigenclt/error.hpp"
#include "eigenclt/rng.hpp"

namespace eigenclt {

namespace {

constexpr int kMaxDepthCap = 30;  // node ids must stay below bit 31

void check_init(const ModelSpec& spec, std::span<const double> init) {
  if (static_cast<int>(init.size()) != spec.n_particles)
    fail(ErrorCode::InvalidInit, "init has " + std::to_string(init.size()) +
                                     " entries, model has N=" +
                                     std::to_string(spec.n_particles));
  for (std::size_t i = 0; i < init.size(); ++i) {
    if (!std::isfinite(init[i])) fail(ErrorCode::InvalidInit, "non-finite init");
    if (i > 0 && !(init[i] > init[i - 1]))
      fail(ErrorCode::InvalidInit,
           "init must be strictly increasing (index " + std::to_string(i) + ")");
  }
  if (spec.nonnegative && !init.empty() && init[0] < 0.0)
    fail(ErrorCode::InvalidInit, "negative init for a nonnegative model");
}

void check_control(const StepControl& c) {
  if (!(c.dt > 0.0)) fail(ErrorCode::InvalidParams, "dt must be > 0");
  if (c.max_substeps < 1 || c.max_substeps > kMaxDepthCap)
    fail(ErrorCode::InvalidParams, "max_substeps must be in [1, 30]");
  if (c.min_depth < 0 || c.min_depth > c.max_substeps)
    fail(ErrorCode::InvalidParams, "min_depth must be in [0, max_substeps]");
}

// Drift with each pair denominator floored at (floor_i + floor_j) / 2 in
// magnitude. x must be sorted ascending.
void eval_drift_floored(const ModelSpec& spec, std::span<const double> x, double t,
                        std::span<const double> floor, std::span<double> out) {
  const std::size_t n = x.size();
  const auto& K = spec.interaction_poly;
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double xi = x[i], fi = floor[i];
    const double a = K.k0 + K.k1 * xi;
    const double bcoef = K.k1 + K.k2 * xi;
    double acc = 0.0;
#pragma omp simd reduction(+ : acc)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = std::min(xi - x[j], -0.5 * (fi + floor[j]));
      const double term = (a + bcoef * x[j]) / d;
      acc += term;
      out[j] -= term;
    }
    out[i] += acc;
  }
  const double f = spec.time_factor(t);
  for (std::size_t i = 0; i < n; ++i) {
    double b = spec.drift_b(x[i]);
    if (spec.scaling) b += spec.scaling->kappa * x[i];
    out[i] = f * (b + out[i] / spec.n_particles);
  }
}

struct SystemState {
  const ModelSpec* spec;
  std::vector<double> x;
  std::vector<double> drift;
  std::vector<double> sigma;
  std::vector<double> floor;
  std::vector<double> drift2;
  std::vector<double> ysorted;
  std::vector<int> order;
  std::vector<std::vector<double>> proposal;  // one buffer per depth
  std::uint64_t substeps = 0;
  std::uint64_t saturations = 0;
};

// Advances one or more systems over a base step with shared Brownian
// increments. Proposals use the tamed drift and are clamped (Wishart kinds)
// and re-sorted. A rejected proposal (non-finite value or sorted gap below
// min_gap) halves the step in every system at once; the
// increment is split by a Brownian bridge so the total increment over the
// base step is unchanged.
class JointStepper {
 public:
  JointStepper(std::vector<SystemState*> systems, const StepControl& control, double min_gap,
               const CounterRng& bridge, std::uint32_t replica, int n)
      : systems_(std::move(systems)),
        control_(control),
        min_gap_(min_gap),
        bridge_(bridge),
        replica_(replica),
        n_(n),
        dw_(2 * (control.max_substeps + 1), std::vector<double>(n)),
        z_(n) {
    for (auto* s : systems_) {
      s->drift.assign(n, 0.0);
      s->sigma.assign(n, 0.0);
      s->floor.assign(n, 0.0);
      s->drift2.assign(n, 0.0);
      s->ysorted.assign(n, 0.0);
      s->order.assign(n, 0);
      s->proposal.assign(control.max_substeps + 1, std::vector<double>(n));
    }
  }

  void advance_base(std::uint32_t step, double t, double h, std::span<const double> dW) {
    step_ = step;
    advance(t, h, dW.data(), 1u, 0);
  }

 private:
  void coefficients(SystemState& s, double t, double h, bool tamed) {
    const ModelSpec& spec = *s.spec;
    const bool clamp = control_.clamp_nonnegative && spec.nonnegative;
    const double scale = tamed ? control_.tame * std::sqrt(h) : 0.0;
    for (int i = 0; i < n_; ++i) {
      s.sigma[i] = spec.diffusion_at(t, clamp ? std::max(0.0, s.x[i]) : s.x[i]);
      s.floor[i] = std::max(min_gap_, scale * s.sigma[i]);
    }
    eval_drift_floored(spec, s.x, t, s.floor, s.drift);
  }

  bool propose(SystemState& s, double t, double h, const double* dW, int depth) {
    const bool clamp = control_.clamp_nonnegative && s.spec->nonnegative;
    coefficients(s, t, h, true);
    auto& y = s.proposal[depth];
    for (int i = 0; i < n_; ++i) {
      y[i] = s.x[i] + s.drift[i] * h + s.sigma[i] * dW[i];
      if (!std::isfinite(y[i])) return false;
      if (clamp && y[i] < 0.0) y[i] = 0.0;
    }
    if (control_.scheme == StepControl::Scheme::Heun) {
      // Drift at the predictor, evaluated in sorted order and mapped back.
      auto& order = s.order;
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](int a, int b) { return y[a] < y[b]; });
      for (int k = 0; k < n_; ++k) s.ysorted[k] = y[order[k]];
      for (int k = 0; k + 1 < n_; ++k)
        if (!(s.ysorted[k + 1] - s.ysorted[k] >= min_gap_)) return false;
      const ModelSpec& spec = *s.spec;
      const double scale = control_.tame * std::sqrt(h);
      for (int k = 0; k < n_; ++k) {
        const double sk = spec.diffusion_at(t + h, clamp ? std::max(0.0, s.ysorted[k]) : s.ysorted[k]);
        s.floor[k] = std::max(min_gap_, scale * sk);
      }
      eval_drift_floored(spec, s.ysorted, t + h, s.floor, s.drift2);
      for (int k = 0; k < n_; ++k) {
        const int i = order[k];
        y[i] = s.x[i] + 0.5 * (s.drift[i] + s.drift2[k]) * h + s.sigma[i] * dW[i];
        if (!std::isfinite(y[i])) return false;
        if (clamp && y[i] < 0.0) y[i] = 0.0;
      }
    }
    std::sort(y.begin(), y.end());
    for (int i = 0; i + 1 < n_; ++i)
      if (!(y[i + 1] - y[i] >= min_gap_)) return false;
    return true;
  }

  // Last resort once the halving budget is spent: floors at min_gap only,
  // then clamp, sort and push apart to min_gap.
  void saturated_step(SystemState& s, double t, double h, const double* dW) {
    const bool clamp = control_.clamp_nonnegative && s.spec->nonnegative;
    coefficients(s, t, h, false);
    for (int i = 0; i < n_; ++i) {
      s.x[i] += s.drift[i] * h + s.sigma[i] * dW[i];
      if (!std::isfinite(s.x[i]))
        fail(ErrorCode::NonFinite, "saturated step produced a non-finite position");
      if (clamp && s.x[i] < 0.0) s.x[i] = 0.0;
    }
    std::sort(s.x.begin(), s.x.end());
    for (int i = 1; i < n_; ++i) s.x[i] = std::max(s.x[i], s.x[i - 1] + min_gap_);
    ++s.saturations;
    ++s.substeps;
  }

  void advance(double t, double h, const double* dW, std::uint32_t node, int depth) {
    bool ok = depth >= control_.min_depth;
    if (ok)
      for (auto* s : systems_) ok = propose(*s, t, h, dW, depth) && ok;
    if (ok) {
      for (auto* s : systems_) {
        s->x.swap(s->proposal[depth]);
        ++s->substeps;
      }
      return;
    }
    if (depth >= control_.max_substeps) {
      if (!control_.saturate)
        fail(ErrorCode::MaxSubstepsExceeded,
             "step " + std::to_string(step_) + " at t=" + std::to_string(t));
      for (auto* s : systems_) saturated_step(*s, t, h, dW);
      return;
    }
    bridge_.fill_normals(replica_, step_, node, z_);
    double* dw1 = dw_[2 * depth].data();
    double* dw2 = dw_[2 * depth + 1].data();
    const double sd = std::sqrt(h / 4.0);
    for (int i = 0; i < n_; ++i) {
      dw1[i] = 0.5 * dW[i] + sd * z_[i];
      dw2[i] = dW[i] - dw1[i];
    }
    advance(t, 0.5 * h, dw1, 2 * node, depth + 1);
    advance(t + 0.5 * h, 0.5 * h, dw2, 2 * node + 1, depth + 1);
  }

  std::vector<SystemState*> systems_;
  const StepControl& control_;
  double min_gap_;
  const CounterRng& bridge_;
  std::uint32_t replica_;
  int n_;
  std::uint32_t step_ = 0;
  std::vector<std::vector<double>> dw_;
  std::vector<double> z_;
};

Trajectory make_trajectory(int n, const std::vector<double>& grid, std::uint64_t seed,
                           std::uint32_t replica, bool record_noise) {
  Trajectory tr;
  tr.n_particles = n;
  tr.grid = grid;
  tr.states.resize(grid.size() * n);
  tr.has_noise = record_noise;
  if (record_noise) tr.noise.resize((grid.size() - 1) * n);
  tr.seed = seed;
  tr.replica = replica;
  return tr;
}

}  // namespace

ParticleState step(const ModelSpec& spec, const ParticleState& state, double dt,
                   std::span<const double> noise, bool clamp_nonnegative) {
  const std::size_t n = state.positions.size();
  if (noise.size() != n) fail(ErrorCode::InvalidParams, "noise length must equal N");
  const auto drift = eval_drift(spec, state.positions, state.time);
  ParticleState out;
  out.time = state.time + dt;
  out.positions.resize(n);
  const bool clamp = clamp_nonnegative && spec.nonnegative;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = state.positions[i];
    const double xd = clamp ? std::max(0.0, x) : x;
    double y = x + drift[i] * dt + spec.diffusion_at(state.time, xd) * noise[i];
    if (!std::isfinite(y)) fail(ErrorCode::NonFinite, "index " + std::to_string(i));
    if (clamp && y < 0.0) y = 0.0;
    out.positions[i] = y;
  }
  std::sort(out.positions.begin(), out.positions.end());
  return out;
}

std::vector<double> time_grid(double horizon, double dt) {
  if (!(horizon >= 0.0)) fail(ErrorCode::InvalidParams, "horizon must be >= 0");
  if (!(dt > 0.0)) fail(ErrorCode::InvalidParams, "dt must be > 0");
  std::vector<double> grid{0.0};
  if (horizon == 0.0) return grid;
  const auto steps = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
  for (std::size_t k = 1; k < steps; ++k) grid.push_back(static_cast<double>(k) * dt);
  grid.push_back(horizon);
  return grid;
}

double default_min_gap(std::span<const double> init) {
  if (init.empty()) return 1e-8;
  const auto [lo, hi] = std::minmax_element(init.begin(), init.end());
  return 1e-8 * (1.0 + (*hi - *lo));
}

Trajectory simulate(const ModelSpec& spec, std::span<const double> init, double horizon,
                    const StepControl& control, std::uint64_t seed, bool record_noise,
                    std::uint32_t replica) {
  check_init(spec, init);
  check_control(control);
  const int n = spec.n_particles;
  const auto grid = time_grid(horizon, control.dt);
  Trajectory tr = make_trajectory(n, grid, seed, replica, record_noise);
  std::copy(init.begin(), init.end(), tr.states.begin());
  if (grid.size() == 1) return tr;

  const double min_gap = control.min_gap > 0.0 ? control.min_gap : default_min_gap(init);
  const CounterRng noise_rng(seed, Domain::SdeNoise);
  const CounterRng bridge_rng(seed, Domain::BridgeSplit);

  SystemState sys{&spec, std::vector<double>(init.begin(), init.end()), {}, {}};
  JointStepper stepper({&sys}, control, min_gap, bridge_rng, replica, n);
  std::vector<double> dW(n);
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double h = grid[k + 1] - grid[k];
    noise_rng.fill_normals(replica, static_cast<std::uint32_t>(k), 1u, dW);
    const double sh = std::sqrt(h);
    for (auto& w : dW) w *= sh;
    if (record_noise) std::copy(dW.begin(), dW.end(), tr.noise.begin() + k * n);
    stepper.advance_base(static_cast<std::uint32_t>(k), grid[k], h, dW);
    std::copy(sys.x.begin(), sys.x.end(), tr.states.begin() + (k + 1) * n);
  }
  tr.substeps = sys.substeps;
  tr.saturations = sys.saturations;
  return tr;
}

std::pair<Trajectory, Trajectory> coupled_simulate(const ModelSpec& spec_low,
                                                   const ModelSpec& spec_high,
                                                   std::span<const double> init_low,
                                                   std::span<const double> init_high,
                                                   double horizon, const StepControl& control,
                                                   std::uint64_t seed, std::uint32_t replica) {
  if (!same_noise_structure(spec_low, spec_high))
    fail(ErrorCode::MismatchedModels, "diffusion or interaction kernels differ");
  check_init(spec_low, init_low);
  check_init(spec_high, init_high);
  check_control(control);
  const int n = spec_low.n_particles;
  const auto grid = time_grid(horizon, control.dt);
  Trajectory lo = make_trajectory(n, grid, seed, replica, true);
  Trajectory hi = make_trajectory(n, grid, seed, replica, true);
  std::copy(init_low.begin(), init_low.end(), lo.states.begin());
  std::copy(init_high.begin(), init_high.end(), hi.states.begin());
  if (grid.size() == 1) return {lo, hi};

  double min_gap = control.min_gap;
  if (min_gap <= 0.0) min_gap = std::min(default_min_gap(init_low), default_min_gap(init_high));
  const CounterRng noise_rng(seed, Domain::SdeNoise);
  const CounterRng bridge_rng(seed, Domain::BridgeSplit);

  SystemState a{&spec_low, std::vector<double>(init_low.begin(), init_low.end()), {}, {}};
  SystemState b{&spec_high, std::vector<double>(init_high.begin(), init_high.end()), {}, {}};
  JointStepper stepper({&a, &b}, control, min_gap, bridge_rng, replica, n);
  std::vector<double> dW(n);
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double h = grid[k + 1] - grid[k];
    noise_rng.fill_normals(replica, static_cast<std::uint32_t>(k), 1u, dW);
    const double sh = std::sqrt(h);
    for (auto& w : dW) w *= sh;
    std::copy(dW.begin(), dW.end(), lo.noise.begin() + k * n);
    std::copy(dW.begin(), dW.end(), hi.noise.begin() + k * n);
    stepper.advance_base(static_cast<std::uint32_t>(k), grid[k], h, dW);
    std::copy(a.x.begin(), a.x.end(), lo.states.begin() + (k + 1) * n);
    std::copy(b.x.begin(), b.x.end(), hi.states.begin() + (k + 1) * n);
  }
  lo.substeps = a.substeps;
  lo.saturations = a.saturations;
  hi.substeps = b.substeps;
  hi.saturations = b.saturations;
  return {std::move(lo), std::move(hi)};
}

OrderingReport check_ordering(const Trajectory& low, const Trajectory& high) {
  if (low.grid != high.grid || low.n_particles != high.n_particles)
    fail(ErrorCode::GridMismatch, "trajectories have different grids or sizes");
  OrderingReport r;
  const int n = low.n_particles;
  r.pairs = low.grid.size() * static_cast<std::size_t>(n);
  for (std::size_t k = 0; k < low.grid.size(); ++k) {
    const auto a = low.state(k);
    const auto b = high.state(k);
    for (int i = 0; i < n; ++i) {
      if (a[i] <= b[i]) continue;
      if (!r.has_violation) {
        r.has_violation = true;
        r.first_time = low.grid[k];
        r.first_index = i;
      }
      ++r.violations;
    }
  }
  r.fraction = r.pairs == 0 ? 1.0
                            : static_cast<double>(r.pairs - r.violations) /
                                  static_cast<double>(r.pairs);
  return r;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  CsvWriter w(path);
  std::vector<std::string> header{"t"};
  for (int i = 1; i <= traj.n_particles; ++i) header.push_back("x" + std::to_string(i));
  w.header(header);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    w.begin_row();
    w.field(traj.grid[k]);
    for (double x : traj.state(k)) w.field(x);
    w.end_row();
  }
}

}  // namespace eigenclt
