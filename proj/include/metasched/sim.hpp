#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "metasched/rng.hpp"
#include "metasched/tensor.hpp"

namespace metasched {

struct LatencyNoise {
  double alloc_jitter_lo = 0.0;  // seconds added to allocation, uniform draw
  double alloc_jitter_hi = 0.0;
};

// Arrival-rate schedule; with period > 0 the rate switches between entries
// of `lambdas` every `period` intervals.
struct RegimeSchedule {
  int period = 0;
  std::vector<double> lambdas;
};

struct EnvConfig {
  double delta = 10.0;        // interval length, seconds
  double rho = 1e-4;          // serverless cost per second, $/s
  double lambda = 1.2;        // Poisson arrivals per interval
  int horizon = 1000;         // T, episode length in intervals
  int trace_intervals = 100;  // trace-collection intervals per policy
  uint64_t seed = 1;
  double allocation_time = 0.5;  // seconds to start a container on a host
  double migration_delay = 2.0;  // seconds added to response on reassignment
  std::optional<LatencyNoise> latency_noise;
  std::optional<RegimeSchedule> regime;

  void validate() const;
  double lambda_at(int interval) const;  // interval is 1-based
};

struct HostSpec {
  std::string name;
  double ips_capacity = 0;    // instructions per second
  double ram_capacity = 0;    // GB
  double disk_capacity = 0;   // GB
  double cost_per_s = 0;      // mu, $/s
  std::vector<double> power_table;  // 11 wattages at 0%,10%,...,100% cpu

  void validate() const;
};

// Interval-averaged utilization of one host.
struct HostState {
  double ips_used = 0;
  double ram_used = 0;
  double disk_used = 0;
};

struct AppProfile {
  std::string name;
  double ips_lo = 0, ips_hi = 0;
  double ram_lo = 0, ram_hi = 0;
  double disk_lo = 0, disk_hi = 0;
  double work_lo = 0, work_hi = 0;  // total instructions
};

struct Task {
  int id = -1;
  int app_type = 0;
  double ips_demand = 0;   // c
  double ram_demand = 0;   // r
  double disk_demand = 0;  // s
  double total_work = 0;
  double remaining_work = 0;
  double work_done = 0;
  int arrival_interval = 0;
  std::optional<int> completion_interval;
  double waiting_time = 0;
  double exec_time = 0;
  double migration_penalty = 0;
  double response_time = 0;
  double sla_deadline = 0;  // psi; 0 when no table configured
  int host = -1;            // current placement, -1 = unplaced
  int migrations = 0;
};

// Bipartite task -> host assignment; exactly one edge per active task.
struct ScheduleGraph {
  std::vector<std::pair<int, int>> edges;  // (task_id, host_id)

  int host_of(int task_id) const;
  void sort_edges();
};

struct CompletionRecord {
  int task_id = 0;
  int app_type = 0;
  int arrival_interval = 0;
  double response_time = 0;
  double waiting_time = 0;
};

struct IntervalRecord {
  int interval = 0;  // 1-based
  int policy_index = -1;
  std::string policy_name;
  double omega = 0;          // scheduling time, s
  double selector_time = 0;  // meta-selection time, s
  double phi = 0;            // amortized execution cost, $
  double energy_j = 0;
  int arrivals = 0;
  int active_tasks = 0;
  int completions = 0;
  int migrations = 0;
  int unplaced = 0;
  std::vector<HostState> host_states;
  std::vector<double> host_cpu_pct;
  std::vector<CompletionRecord> completed;
  // Denormalized per-policy cost estimates when a surrogate selector ran.
  std::vector<double> predicted_total;
};

struct EpisodeLog {
  int num_hosts = 0;
  int num_app_types = 0;
  std::vector<IntervalRecord> intervals;
};

struct Metrics {
  double avg_cost = 0;       // $ per interval, Eq-style amortized
  double total_energy_j = 0;
  double avg_response_s = 0;
  double avg_wait_s = 0;
  double sla_rate = 0;       // fraction of completed tasks meeting psi
  double fairness = 0;       // Jain's index over response times
  double avg_cpu_pct = 0;
  int completed_tasks = 0;
  double total_objective = 0;  // sum phi + rho*omega over intervals
};

// State observed by the meta-selector: previous interval's task features,
// host features and applied schedule.
struct ObservedState {
  Tensor task_features;  // n x 3 (ips, ram GB, disk GB demands)
  Tensor host_features;  // m x 3 interval-averaged usage
  ScheduleGraph schedule;
};

// Amortized execution cost of one interval: active-host dollar cost divided
// by completions, denominator clamped to 1. A host is active iff its CPU
// utilization is > 0.
double execution_cost(const std::vector<HostState>& states, const std::vector<HostSpec>& specs,
                      double delta, int completions);

// Power-model energy over one interval, all hosts (idle hosts draw the 0%
// table entry). The simulator's per-interval accounting hibernates idle
// hosts instead; see Env::step.
double energy(const std::vector<HostState>& states, const std::vector<HostSpec>& specs, double delta);

// Linear interpolation of an 11-entry power table at utilization u in [0,1].
double interpolate_power(const std::vector<double>& table, double u);

// Discrete-time cloud environment. Per interval: call begin_interval() to
// admit arrivals, schedule all active tasks, then step() to execute.
class Env {
 public:
  Env(EnvConfig cfg, std::vector<HostSpec> hosts, std::vector<AppProfile> profiles);

  void reset(uint64_t seed);

  int interval() const { return interval_; }  // completed steps
  const EnvConfig& config() const { return cfg_; }
  const std::vector<HostSpec>& specs() const { return specs_; }
  const std::vector<AppProfile>& profiles() const { return profiles_; }

  // Samples Poisson arrivals for the next interval and admits them.
  // Returns the number of new tasks.
  int begin_interval();

  // Scripted admission for replay and tests; ids must be fresh and unique.
  // Call after begin_interval (counts toward the same interval).
  void admit(std::vector<Task> tasks);

  const std::vector<Task>& active() const { return active_; }
  const std::vector<HostState>& host_states() const { return host_states_; }
  const ObservedState& observed() const { return observed_; }

  // Demand features of all currently active tasks, n x 3.
  Tensor current_task_features() const;

  IntervalRecord step(const ScheduleGraph& decision, int policy_index, const std::string& policy_name,
                      double omega, double selector_time);

  const EpisodeLog& log() const { return log_; }
  const std::vector<Task>& completed() const { return completed_; }

  void set_sla_table(std::vector<double> psi_per_app) { sla_table_ = std::move(psi_per_app); }

 private:
  std::vector<Task> sample_arrivals(int interval_index);

  EnvConfig cfg_;
  std::vector<HostSpec> specs_;
  std::vector<AppProfile> profiles_;
  std::vector<double> sla_table_;

  int interval_ = 0;
  bool interval_open_ = false;
  int next_task_id_ = 0;
  std::vector<Task> active_;
  std::vector<Task> completed_;
  std::vector<HostState> host_states_;
  ObservedState observed_;
  EpisodeLog log_;
  Rng arrivals_rng_{0};
  Rng noise_rng_{0};
};

// Arrival sampling as a standalone operation (used by Env and tests).
std::vector<Task> sample_arrivals(Rng& rng, double lambda, const std::vector<AppProfile>& profiles,
                                  int& next_task_id, int arrival_interval);

// The seven comparison metrics. `psi_per_app` maps app type index to its SLA
// deadline; required size num_app_types. Throws on an empty episode.
Metrics metrics_report(const EpisodeLog& log, const std::vector<double>& psi_per_app, double rho);

// Nearest-rank percentile of completed response times per app type.
// Throws (naming the type) if an app type has no completed task.
std::vector<double> calibrate_sla(const EpisodeLog& log, const std::vector<std::string>& app_names,
                                  double percentile = 90.0);

double jain_fairness(const std::vector<double>& values);

}  // namespace metasched
