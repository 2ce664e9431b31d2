#include "luq/models.hpp"

#include <cmath>

namespace luq {

double oscillator_solution(const OscillatorParams& p, double t) {
  const double c = p.c;
  const double w = p.omega0;
  if (c < w) {
    const double wd = std::sqrt(w * w - c * c);
    return std::exp(-c * t) * (3.0 * std::cos(wd * t) + (3.0 * c / wd) * std::sin(wd * t));
  }
  if (c == w) return 3.0 * (1.0 + c * t) * std::exp(-c * t);
  const double s = std::sqrt(c * c - w * w);
  const double r1 = -c + s;
  const double r2 = -c - s;
  const double a = -3.0 * r2 / (r1 - r2);
  const double b = 3.0 * r1 / (r1 - r2);
  return a * std::exp(r1 * t) + b * std::exp(r2 * t);
}

Vector oscillator_series(const OscillatorParams& p, const std::vector<double>& times) {
  Vector out(static_cast<Eigen::Index>(times.size()));
  for (std::size_t i = 0; i < times.size(); ++i) out(static_cast<Eigen::Index>(i)) = oscillator_solution(p, times[i]);
  return out;
}

namespace {

// Dormand-Prince tableau.
constexpr double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9;
constexpr double A21 = 1.0 / 5;
constexpr double A31 = 3.0 / 40, A32 = 9.0 / 40;
constexpr double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9;
constexpr double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729;
constexpr double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176,
                 A65 = -5103.0 / 18656;
constexpr double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784, B6 = 11.0 / 84;
constexpr double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200, E6 = 22.0 / 525,
                 E7 = -1.0 / 40;

// Dense output coefficients: y(t_old + x h) = y_old + h * sum_s k_s * sum_j P[s][j] x^(j+1).
constexpr double P[7][4] = {
    {1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0},
    {0.0, 0.0, 0.0, 0.0},
    {0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0},
    {0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0},
    {0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0, 701980252875.0 / 199316789632.0},
    {0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0},
    {0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0},
};

constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 10.0;
constexpr double kBeta = 0.04;
constexpr double kAlpha = 0.2 - 0.75 * kBeta;

double error_norm(const Vector& err, const Vector& y0, const Vector& y1, const Rk45Options& o) {
  const Vector scale = (o.atol + o.rtol * y0.cwiseAbs().cwiseMax(y1.cwiseAbs()).array()).matrix();
  return std::sqrt((err.array() / scale.array()).square().mean());
}

double initial_step(const OdeRhs& rhs, double t0, const Vector& y0, const Vector& f0, double span,
                    const Rk45Options& o) {
  const Vector scale = (o.atol + o.rtol * y0.cwiseAbs().array()).matrix();
  const double d0 = std::sqrt((y0.array() / scale.array()).square().mean());
  const double d1 = std::sqrt((f0.array() / scale.array()).square().mean());
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, span);
  const Vector y1 = y0 + h0 * f0;
  Vector f1(y0.size());
  rhs(t0 + h0, y1, f1);
  const double d2 = std::sqrt(((f1 - f0).array() / scale.array()).square().mean()) / h0;
  const double h1 = (d1 <= 1e-15 && d2 <= 1e-15) ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / std::max(d1, d2), 0.2);
  return std::min({100.0 * h0, h1, span, o.max_step});
}

}  // namespace

Matrix rk45_integrate(const OdeRhs& rhs, const Vector& y0, double t0, const std::vector<double>& output_times,
                      const Rk45Options& options) {
  if (!(options.rtol > 0.0) || !(options.atol > 0.0)) throw ValidationError("rk45 needs rtol, atol > 0");
  for (std::size_t i = 0; i < output_times.size(); ++i) {
    if (output_times[i] < t0 || (i > 0 && output_times[i] < output_times[i - 1])) {
      throw ValidationError("rk45 output times must be non-decreasing and not before t0");
    }
  }
  const Eigen::Index n = y0.size();
  Matrix out(static_cast<Eigen::Index>(output_times.size()), n);
  if (output_times.empty()) return out;
  const double t_end = output_times.back();

  std::size_t next = 0;
  while (next < output_times.size() && output_times[next] == t0) out.row(static_cast<Eigen::Index>(next++)) = y0;
  if (next == output_times.size()) return out;

  Vector k[7];
  for (auto& v : k) v.resize(n);
  double t = t0;
  Vector y = y0;
  rhs(t, y, k[0]);
  double h = initial_step(rhs, t, y, k[0], t_end - t0, options);
  double err_old = 1e-4;
  bool rejected = false;
  Vector ytmp(n), ynew(n), err(n);

  for (long step = 0; next < output_times.size(); ++step) {
    if (step >= options.max_steps) throw NumericalError("rk45 exceeded the step limit");
    const double min_step = 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t));
    if (h < min_step) throw NumericalError("rk45 step size underflow at t = " + std::to_string(t) + " (stiff system?)");
    h = std::min(h, options.max_step);
    const bool last = t + h >= t_end;
    if (last) h = t_end - t;

    ytmp = y + h * A21 * k[0];
    rhs(t + C2 * h, ytmp, k[1]);
    ytmp = y + h * (A31 * k[0] + A32 * k[1]);
    rhs(t + C3 * h, ytmp, k[2]);
    ytmp = y + h * (A41 * k[0] + A42 * k[1] + A43 * k[2]);
    rhs(t + C4 * h, ytmp, k[3]);
    ytmp = y + h * (A51 * k[0] + A52 * k[1] + A53 * k[2] + A54 * k[3]);
    rhs(t + C5 * h, ytmp, k[4]);
    ytmp = y + h * (A61 * k[0] + A62 * k[1] + A63 * k[2] + A64 * k[3] + A65 * k[4]);
    rhs(t + h, ytmp, k[5]);
    ynew = y + h * (B1 * k[0] + B3 * k[2] + B4 * k[3] + B5 * k[4] + B6 * k[5]);
    const double t_new = last ? t_end : t + h;
    rhs(t_new, ynew, k[6]);
    err = h * (E1 * k[0] + E3 * k[2] + E4 * k[3] + E5 * k[4] + E6 * k[5] + E7 * k[6]);
    if (!ynew.allFinite()) throw NumericalError("rk45 produced non-finite values at t = " + std::to_string(t));
    const double e = error_norm(err, y, ynew, options);

    if (e > 1.0) {
      h *= std::max(kMinFactor, kSafety * std::pow(e, -0.2));
      rejected = true;
      continue;
    }

    // Dense output for every request inside (t, t_new].
    while (next < output_times.size() && output_times[next] <= t_new) {
      const double tq = output_times[next];
      if (tq == t_new) {
        out.row(static_cast<Eigen::Index>(next)) = ynew;
      } else {
        const double x = (tq - t) / h;
        double powers[4] = {x, x * x, x * x * x, x * x * x * x};
        Vector acc = Vector::Zero(n);
        for (int s = 0; s < 7; ++s) {
          double coef = 0.0;
          for (int j = 0; j < 4; ++j) coef += P[s][j] * powers[j];
          if (coef != 0.0) acc += coef * k[s];
        }
        out.row(static_cast<Eigen::Index>(next)) = y + h * acc;
      }
      ++next;
    }

    double factor = e == 0.0 ? kMaxFactor : kSafety * std::pow(e, -kAlpha) * std::pow(err_old, kBeta);
    factor = std::clamp(factor, kMinFactor, kMaxFactor);
    if (rejected) factor = std::min(1.0, factor);
    err_old = std::max(e, 1e-4);
    rejected = false;
    t = t_new;
    y = ynew;
    k[0] = k[6];
    h *= factor;
  }
  return out;
}

void selkov_rhs(const SelkovParams& p, const Vector& state, Vector& dstate) {
  const double a = p.a;
  const double b = p.b;
  const double xs = state(0) + b;
  const double ys = state(1) + b / (a + b * b);
  const double nonlinear = xs * xs * ys;
  dstate(0) = -xs + a * ys + nonlinear;
  dstate(1) = b - a * ys - nonlinear;
}

Vector selkov_series(const SelkovParams& p, const std::vector<double>& times, const Rk45Options& options) {
  if (!(p.a > 0.0) || !(p.b > 0.0)) throw ValidationError("Sel'kov parameters must be positive");
  const OdeRhs rhs = [&p](double, const Vector& y, Vector& dy) { selkov_rhs(p, y, dy); };
  const Matrix sol = rk45_integrate(rhs, Vector::Ones(2), 0.0, times, options);
  return sol.col(0);
}

std::pair<double, double> hopf_locus(double a) {
  if (!(a > 0.0) || 1.0 - 8.0 * a < 0.0) throw ValidationError("Hopf locus needs 0 < a <= 1/8");
  const double root = std::sqrt(1.0 - 8.0 * a);
  return {std::sqrt((1.0 - root - 2.0 * a) / 2.0), std::sqrt((1.0 + root - 2.0 * a) / 2.0)};
}

void BurgersSetup::validate() const {
  if (!(a > 0.0)) throw ValidationError("ramp half-width must be positive");
  if (!(f_left > f_right && f_right > 0.0)) throw ValidationError("Burgers setup needs f_left > f_right > 0");
  if (!(x_hi > x_lo) || cells < 2) throw ValidationError("Burgers grid is degenerate");
  if (ramp_center - a < x_lo || ramp_center + a > x_hi) throw ValidationError("ramp leaves the domain");
  if (!(cfl > 0.0 && cfl <= 1.0)) throw ValidationError("CFL number must lie in (0, 1]");
}

Vector burgers_initial(const BurgersSetup& s) {
  s.validate();
  const double l = s.ramp_center - s.a;
  const double r = s.ramp_center + s.a;
  const double slope = (s.f_left - s.f_right) / (r - l);
  // Antiderivative of the ramp profile, measured from l.
  auto prim = [&](double x) {
    if (x <= l) return s.f_left * (x - l);
    if (x <= r) return s.f_left * (x - l) - 0.5 * slope * (x - l) * (x - l);
    const double at_r = s.f_left * (r - l) - 0.5 * slope * (r - l) * (r - l);
    return at_r + s.f_right * (x - r);
  };
  const double dx = s.dx();
  Vector q(s.cells);
  for (int i = 0; i < s.cells; ++i) {
    const double x0 = s.x_lo + i * dx;
    q(i) = (prim(x0 + dx) - prim(x0)) / dx;
  }
  return q;
}

double burgers_flux(double left, double right) {
  const double fl = 0.5 * left * left;
  const double fr = 0.5 * right * right;
  if (left > right) return std::max(fl, fr);
  if (left > 0.0) return fl;
  if (right < 0.0) return fr;
  return 0.0;
}

void burgers_step(Vector& q, double dt, double dx) {
  const Eigen::Index n = q.size();
  Vector flux(n + 1);
  flux(0) = burgers_flux(q(0), q(0));
  for (Eigen::Index i = 1; i < n; ++i) flux(i) = burgers_flux(q(i - 1), q(i));
  flux(n) = burgers_flux(q(n - 1), q(n - 1));
  const double ratio = dt / dx;
  for (Eigen::Index i = 0; i < n; ++i) q(i) -= ratio * (flux(i + 1) - flux(i));
}

int burgers_cell(const BurgersSetup& s, double x) {
  if (x < s.x_lo || x > s.x_hi) throw ValidationError("probe lies outside the domain");
  const int cell = static_cast<int>(std::floor((x - s.x_lo) / s.dx()));
  return std::min(cell, s.cells - 1);
}

Matrix burgers_probes(const BurgersSetup& setup, const std::vector<double>& probes_x,
                      const std::vector<double>& output_times) {
  setup.validate();
  std::vector<int> cells;
  for (double x : probes_x) cells.push_back(burgers_cell(setup, x));
  for (std::size_t i = 0; i < output_times.size(); ++i) {
    if (output_times[i] < 0.0 || (i > 0 && output_times[i] < output_times[i - 1])) {
      throw ValidationError("Burgers output times must be non-negative and non-decreasing");
    }
  }
  Vector q = burgers_initial(setup);
  const double dx = setup.dx();
  Matrix out(static_cast<Eigen::Index>(output_times.size()), static_cast<Eigen::Index>(probes_x.size()));
  double t = 0.0;
  for (std::size_t k = 0; k < output_times.size(); ++k) {
    const double target = output_times[k];
    while (t < target) {
      const double speed = q.cwiseAbs().maxCoeff();
      double dt = speed > 0.0 ? setup.cfl * dx / speed : target - t;
      const bool land = t + dt >= target;
      if (land) dt = target - t;
      burgers_step(q, dt, dx);
      t = land ? target : t + dt;
    }
    for (std::size_t p = 0; p < cells.size(); ++p) out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p)) = q(cells[p]);
  }
  return out;
}

Vector burgers_series(const BurgersSetup& setup, double probe_x, const std::vector<double>& output_times) {
  return burgers_probes(setup, {probe_x}, output_times).col(0);
}

}  // namespace luq
