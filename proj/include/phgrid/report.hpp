#pragma once

// Text and CSV renderings of operating points, certificates and trajectories.
// CSV numbers use 17 significant digits; files are written then renamed.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "phgrid/certificates.hpp"
#include "phgrid/equilibrium.hpp"
#include "phgrid/network.hpp"
#include "phgrid/simulator.hpp"

namespace phgrid {

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string format_number(double v);

/// Columns: kind,id,quantity,value (kind in system|generator|bus|line|load).
std::string operating_point_csv(const NetworkDescription& nd, const OperatingPoint& op);
std::string operating_point_text(const NetworkDescription& nd, const OperatingPoint& op);

/// Uniqueness check of each generator's speed equation at its operating point.
std::vector<UniquenessReport> uniqueness_reports(const NetworkDescription& nd, const OperatingPoint& op);

std::string certificate_text(const NetworkDescription& nd, const CertificateReport& report,
                             const std::vector<UniquenessReport>& uniqueness);

/// Columns: t, per generator freq_hz_i, I_x_i, I_y_i, I_z_i (i from 1), per line
/// I_a_<line>, I_b_<line>, I_c_<line>, then H_total_shifted, power_residual.
std::string trajectory_csv(const CompositeSystem& cs, const Trajectory& traj);

/// One row per run with its settling metrics.
std::string summary_csv(const std::vector<RunResult>& runs);

}  // namespace phgrid
