#pragma once

// Closed-loop scenario runs: plant, stabilizer and logging.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "wbstab/baseline.hpp"
#include "wbstab/simworld.hpp"
#include "wbstab/stabilizer.hpp"

namespace wbstab::runner {

enum class StabilizerKind { proposed, zmp, none };
enum class ScenarioKind { flat, coupled, independent, drop };
enum class Outcome { balanced, fell, diverged };

const char* to_string(StabilizerKind k);
const char* to_string(ScenarioKind k);
const char* to_string(Outcome o);

struct ScenarioConfig {
  std::string model = "builtin:biped12";
  StabilizerKind stabilizer = StabilizerKind::proposed;
  ScenarioKind scenario = ScenarioKind::flat;

  double height_amplitude = 0.03;       // m
  double attitude_amplitude_deg = 8.0;
  double attitude_rate_deg = 12.57;     // peak, deg/s
  double ramp_time = 1.0;               // s
  double drop = 0.03;                   // m
  double tilt_deg = 5.0;
  double t_event = 3.5;                 // s

  double duration = 10.0;     // s
  double control_dt = 1e-3;
  double sim_dt = 1e-4;
  double settle_time = 1.0;   // s of servo-only standing before t = 0

  // stabilizer
  double force_gain = -1000.0;  // K = k I
  double moment_gain = 0.0;     // overrides the moment axes of K when nonzero, 1/s
  double q_d = 1e3;
  double q_com = 1e2;
  double q_orientation = 1e1;
  double q_tau = 1e-4;
  double kp_task = 25.0;
  double kd_task = 8.0;
  double kp_velocity = 10.0;
  double min_normal_force = 5.0;
  double stabilizer_mu = 0.7;
  double force_cutoff_hz = 40.0;

  // baseline
  double k_zmp = 3.0;
  double k_fz = 1.2e-4;
  double k_ankle = 0.01;

  // plant
  double servo_kp_scale = 1.0;
  double servo_kd_scale = 1.0;
  double servo_ki = 0.0;
  double contact_stiffness = 1e5;
  double contact_damping = 1e3;
  double friction_mu = 0.7;

  // zero-net-wrench force step added to F_ID: +step on the first contact's
  // f_z, -step on the second, moments keeping the total wrench unchanged
  double force_step = 0.0;       // N
  double force_step_time = 0.5;  // s

  double perturbation = 0.0;  // rad, seeded initial joint offset amplitude
  std::uint64_t seed = 0;
  bool measure_time = false;
  bool stop_on_fall = true;
  std::string name = "run";

  /// Throws ValidationError.
  void check() const;
  /// Sets one field from its config key. Throws ValidationError on unknown keys.
  void set(const std::string& key, const std::string& value);
  std::string serialize() const;
};

ScenarioConfig parse_config(const std::string& text);
ScenarioConfig load_config(const std::string& path);

struct RunSummary {
  std::string name;
  Outcome outcome = Outcome::balanced;
  double max_com_error = 0.0;     // m, against the nominal reference
  double rms_force_error = 0.0;   // N
  double max_base_tilt = 0.0;     // rad
  double mean_solve_time_us = 0.0;
  long ticks = 0;
  double end_time = 0.0;          // s, time of the outcome or the end
  int controller_errors = 0;      // ticks where the stabilizer threw; the previous command is held
  int qp_errors = 0;              // of those, infeasible QPs and failed QP checks
  std::string first_error;
  double max_kkt_residual = 0.0;
  double max_equality_residual = 0.0;
  double max_cone_violation = 0.0;
  double force_settle_time = -1.0;  // s after the force step, |e_F| < 10 % of it thereafter
  double event_recovery_time = -1.0;  // s after t_event, |e_F| < 10 N thereafter
  double final_force_error = 0.0;     // mean |e_F| over the last second, N
};

struct RunOptions {
  std::ostream* csv = nullptr;
  std::string svg_path;  // empty: no plot
};

RunSummary run(const ScenarioConfig& cfg, const RunOptions& opt = {});

/// One run per value of param, results in input order. Runs execute on up to
/// `workers` threads (0: one per core). Per-run errors are recorded as
/// diverged summaries with the message in first_error.
std::vector<RunSummary> sweep(const ScenarioConfig& base, const std::string& param, const std::vector<std::string>& values,
                              unsigned workers = 0);

std::vector<std::string> csv_columns(const model::RobotModel& m, std::size_t n_platforms);
void write_summary(std::ostream& os, const RunSummary& s);
std::string summary_csv_header();
std::string summary_csv_row(const RunSummary& s);

/// Validates a trajectory CSV: header, column count, monotone time, finite values.
/// Returns an empty string when valid, else the first problem found.
std::string validate_csv(const std::string& text);

}  // namespace wbstab::runner
