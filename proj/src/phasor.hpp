#pragma once

// Complex form of synchronous-frame pairs: c = x - j y. In this form a rotor
// offset delta maps common-frame quantities to the rotor frame as c e^{-j delta},
// d/dt becomes j omega, and a generator reads V = (r + j omega L_ss) I + j omega L_m I_f.

#include <Eigen/Dense>
#include <cmath>
#include <complex>

namespace phgrid::detail {

using cplx = std::complex<double>;

inline cplx to_complex(const Eigen::Vector2d& xy) { return {xy(0), -xy(1)}; }
inline cplx to_complex(double x, double y) { return {x, -y}; }
inline Eigen::Vector2d to_pair(cplx c) { return {c.real(), -c.imag()}; }

/// Common synchronous frame -> rotor frame of a machine at offset delta.
inline cplx to_rotor(cplx c, double delta) { return c * std::polar(1.0, -delta); }
inline cplx from_rotor(cplx c, double delta) { return c * std::polar(1.0, delta); }

/// Sync-frame pair of I_a(t) = amplitude cos(omega t + phase).
inline cplx constant_current_phasor(double amplitude, double phase) {
  return std::sqrt(1.5) * std::polar(amplitude, phase);
}

}  // namespace phgrid::detail
