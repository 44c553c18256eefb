#pragma once

#include <filesystem>
#include <string>

#include "amr/simulate.hpp"

namespace amr {

/// "delta", "omega", "pm", ... for a StateField.
const char* state_field_name(int field);

/// Column name of a machine field, e.g. "gen3_omega".
std::string field_column_name(int gen_id, int field);

/// CSV header: time, then per generator delta, omega and the remaining seven
/// states (pm, pgv, vr, rf, efd, ed_p, eq_p).
std::string trajectory_csv_header(const Trajectory& traj);

void write_trajectory_csv(const Trajectory& traj,
                          const std::filesystem::path& path);

/// Reads times, gen_order and states back. Mode and event logs live in the
/// sidecar and are not restored. Throws ParseError.
Trajectory read_trajectory_csv(const std::filesystem::path& path);

/// mode_log, delta_dev, relinearization events and failures, switches and the
/// stability verdict as JSON text.
std::string trajectory_sidecar_json(const Trajectory& traj);
void write_trajectory_sidecar(const Trajectory& traj,
                              const std::filesystem::path& path);

}  // namespace amr
