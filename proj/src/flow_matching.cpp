#include "cvfi/flow_matching.hpp"

namespace cvfi {

double shift_time(double u, double s)
{
    if (!(u >= 0.0 && u <= 1.0)) throw std::invalid_argument("shift_time: u outside [0, 1]");
    if (!(s >= 1.0)) throw std::invalid_argument("shift_time: shift must be >= 1");
    return s * u / (1.0 + (s - 1.0) * u);
}

ShiftSchedule make_schedule(int step_count, double shift)
{
    if (step_count < 1) throw std::invalid_argument("schedule needs at least one step");
    ShiftSchedule out;
    out.shift = shift;
    out.step_count = step_count;
    for (int k = 0; k <= step_count; ++k) out.grid.push_back(shift_time(1.0 - static_cast<double>(k) / step_count, shift));
    return out;
}

}  // namespace cvfi
