#ifndef SQZ_EXPLORE_HPP
#define SQZ_EXPLORE_HPP

#include <string>
#include <vector>

#include "sqz/device.hpp"
#include "sqz/spectrum.hpp"
#include "sqz/trace.hpp"

namespace sqz {

// Reference design for the escape-efficiency study: intrinsic Q is the
// quoted figure of merit; the waveguide geometry entries are calibration
// inputs (documented placeholders for a thin weakly confining SiN strip),
// not measured values.
struct DesignTemplate {
    std::string name;
    double intrinsic_q = 0.0;
    DeviceSpec device;  // loaded Q and escape efficiency derived from intrinsic_q
};

// The two shipped templates: "q13m" (Q_int = 13e6) and "q37m" (Q_int = 37e6),
// both with escape efficiency 0.95.
std::vector<DesignTemplate> reference_templates();
DesignTemplate reference_template(const std::string& name);

// Best stable working point at one pump power: the steady-state locus is
// parametrized by photon number (two detuning branches per N), and the
// on-chip minimum quadrature noise at the evaluation sideband is minimized
// over it.
struct OperatingPoint {
    double detuning_rad_per_s = 0.0;
    double photon_number = 0.0;
    double s_min = 1.0;           // on-chip, linear relative to shot
    double s_max = 1.0;
    double theta_min_rad = 0.0;
    bool found = false;           // false when no stable point exists
};

OperatingPoint optimize_detuning(const DeviceSpec& device, double power_w,
                                 double direction_power_fraction,
                                 double eval_frequency_hz);

struct SweepPoint {
    double power_w = 0.0;
    double detuning_rad_per_s = 0.0;
    double photon_number = 0.0;
    double on_chip_db = 0.0;    // best on-chip S_min, dB relative to shot
    double detected_db = 0.0;   // after the default lumped measurement efficiency
    bool converged = false;     // stable working point found
};

struct TemplateSweep {
    std::string name;
    double intrinsic_q = 0.0;
    double escape_efficiency = 0.0;
    double asymptote_db = 0.0;         // 10 log10(1 - escape efficiency)
    double threshold_power_w = 0.0;    // bistability critical power
    double power_within_1db_w = 0.0;   // lowest power within 1 dB of the asymptote
    std::vector<SweepPoint> points;
};

struct SweepResult {
    std::vector<TemplateSweep> templates;
};

// Default measurement efficiency used for the detected column.
inline constexpr double kDefaultMeasurementEfficiency = 0.478;

// On-chip squeezing versus power for each template, detuning optimized per
// point; evaluation sideband 10 MHz.
SweepResult sweep_power_q(const std::vector<DesignTemplate>& templates,
                          const std::vector<double>& powers_w);

// Default power grid for the sweep subcommand: logarithmic 1 mW - 1 W.
std::vector<double> default_power_grid();

// Minimum pump power whose optimized on-chip squeezing reaches the target
// (dB relative to shot, negative = squeezed). Bisection to 1% relative.
double design_search(const DesignTemplate& tpl, double target_squeezing_db);

// Gnuplot-ready whitespace-separated data with commented headers. The kind
// selects the layout and must match the payload:
//   "spectrum"   -> columns freq_hz s_min_db s_max_db
//   "sweep"      -> one block per template, blank-line separated
//   "normalized" -> columns freq_hz rel_shot_db
std::string emit_plot_data(const QuadratureSpectrum& spectrum, const std::string& kind);
std::string emit_plot_data(const SweepResult& result, const std::string& kind);
std::string emit_plot_data(const NormalizedSpectrum& spectrum, const std::string& kind);

}  // namespace sqz

#endif
