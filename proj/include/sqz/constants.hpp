#ifndef SQZ_CONSTANTS_HPP
#define SQZ_CONSTANTS_HPP

namespace sqz {

inline constexpr double kSpeedOfLight = 299792458.0;        // m/s, exact
inline constexpr double kHbar = 1.054571817e-34;            // J*s, CODATA 2018
inline constexpr double kPi = 3.141592653589793238462643383279502884;

// dB helpers. All internal arithmetic stays in linear power; these live at
// the I/O boundary only.
double db_from_linear(double x);
double linear_from_db(double db);

}  // namespace sqz

#endif
