#include <cmath>
#include <complex>

#include "sqz/spectrum.hpp"

namespace sqz {

LinearizedCavity linearize(const CavitySolution& solution) {
    LinearizedCavity lc;
    lc.kappa = solution.kappa;
    lc.kappa_ext = solution.kappa_ext;
    lc.kerr_g = solution.kerr_g;
    lc.photon_number = solution.photon_number;
    lc.detuning_rad_per_s = solution.detuning_rad_per_s;
    lc.field_phase_rad = solution.field_phase_rad;
    return lc;
}

// Quadrature noise power relative to shot noise at one (Omega, theta).
//
// The fluctuation operators (delta a, delta a^dag) obey a linear system with
// drift matrix
//   A = [ kappa/2 + i (D2 - Omega)        2 i g alpha^2            ]
//       [ conj(2 i g alpha^2)             kappa/2 - i (D2 + Omega) ]
// where D2 = Delta + 4 g N and alpha^2 = N exp(2 i phase). Input-output
// theory maps vacuum inputs through T = kappa_ext B - I (reflected port) and
// L = sqrt(kappa_ext kappa_int) B (loss port) with B = A^{-1}. The measured
// quadrature is u = (e^{-i theta}, e^{i theta}); shot noise is the unit
// background, so S = (|u T|^2 + |u L|^2) / 2 with the row-vector norms summed
// over both input quadrature channels.
double spectrum_point(const LinearizedCavity& lc, double omega_rad_per_s,
                      double theta_rad) {
    using cd = std::complex<double>;
    const double kappa = lc.kappa;
    const double kappa_ext = lc.kappa_ext;
    const double kappa_int = kappa - lc.kappa_ext;
    const double g = lc.kerr_g;
    const double n_cav = lc.photon_number;
    const double d2 = lc.detuning_rad_per_s + 4.0 * g * n_cav;
    const double omega = omega_rad_per_s;

    const cd alpha_sq = n_cav * std::exp(cd(0.0, 2.0 * lc.field_phase_rad));
    const cd coupling = cd(0.0, 2.0 * g) * alpha_sq;

    const cd a11(0.5 * kappa, d2 - omega);
    const cd a22(0.5 * kappa, -(d2 + omega));
    const cd a12 = coupling;
    const cd a21 = std::conj(coupling);

    const cd det = a11 * a22 - a12 * a21;
    const cd b11 = a22 / det;
    const cd b12 = -a12 / det;
    const cd b21 = -a21 / det;
    const cd b22 = a11 / det;

    const cd t11 = kappa_ext * b11 - 1.0;
    const cd t12 = kappa_ext * b12;
    const cd t21 = kappa_ext * b21;
    const cd t22 = kappa_ext * b22 - 1.0;

    const double loss_rate = std::sqrt(kappa_ext * kappa_int);
    const cd l11 = loss_rate * b11;
    const cd l12 = loss_rate * b12;
    const cd l21 = loss_rate * b21;
    const cd l22 = loss_rate * b22;

    const cd u1 = std::exp(cd(0.0, -theta_rad));
    const cd u2 = std::exp(cd(0.0, theta_rad));

    const cd vt1 = u1 * t11 + u2 * t21;
    const cd vt2 = u1 * t12 + u2 * t22;
    const cd vl1 = u1 * l11 + u2 * l21;
    const cd vl2 = u1 * l12 + u2 * l22;

    return 0.5 * (std::norm(vt1) + std::norm(vt2) + std::norm(vl1) + std::norm(vl2));
}

}  // namespace sqz
