#pragma once

#include "luq/common.hpp"

#include <functional>
#include <limits>
#include <utility>
#include <vector>

namespace luq {

struct OscillatorParams {
  double c = 0.5;       ///< damping constant
  double omega0 = 0.75; ///< natural frequency
};

/// y'' + 2c y' + omega0^2 y = 0 with y(0) = 3, y'(0) = 0, in closed form.
double oscillator_solution(const OscillatorParams& p, double t);
Vector oscillator_series(const OscillatorParams& p, const std::vector<double>& times);

using OdeRhs = std::function<void(double t, const Vector& y, Vector& dydt)>;

struct Rk45Options {
  double rtol = 1e-6;
  double atol = 1e-9;
  double max_step = std::numeric_limits<double>::infinity();
  long max_steps = 10'000'000;
};

/// Dormand-Prince 5(4) with PI step control and the 4th-order dense output.
/// Returns one row per output time (non-decreasing, none before t0).
Matrix rk45_integrate(const OdeRhs& rhs, const Vector& y0, double t0, const std::vector<double>& output_times,
                      const Rk45Options& options = {});

struct SelkovParams {
  double a = 0.1;
  double b = 0.6;
};

void selkov_rhs(const SelkovParams& p, const Vector& state, Vector& dstate);

/// x component from x(0) = y(0) = 1, integrated from t = 0.
Vector selkov_series(const SelkovParams& p, const std::vector<double>& times, const Rk45Options& options = {});

/// Hopf locus (b1(a), b2(a)); requires 0 < a <= 1/8.
std::pair<double, double> hopf_locus(double a);

struct BurgersSetup {
  double a = 1.25;       ///< ramp half-width
  double f_left = 1.5;
  double f_right = 1.0;
  double x_lo = 0.0;
  double x_hi = 10.0;
  int cells = 500;
  double ramp_center = 3.25;
  double cfl = 0.9;

  void validate() const;
  double dx() const { return (x_hi - x_lo) / cells; }
};

/// Exact cell averages of the ramp initial condition.
Vector burgers_initial(const BurgersSetup& setup);

/// Godunov flux for f(q) = q^2 / 2 from the exact Riemann solution.
double burgers_flux(double left, double right);

/// One first-order Godunov step with zero-order extrapolation boundaries.
void burgers_step(Vector& q, double dt, double dx);

/// Cell holding x (the last cell owns the right edge).
int burgers_cell(const BurgersSetup& setup, double x);

/// Cell averages at the probe cells for each output time; one column per
/// probe. Steps are shortened to land on output times.
Matrix burgers_probes(const BurgersSetup& setup, const std::vector<double>& probes_x,
                      const std::vector<double>& output_times);
Vector burgers_series(const BurgersSetup& setup, double probe_x, const std::vector<double>& output_times);

}  // namespace luq
