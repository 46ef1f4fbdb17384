#include "metasched/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace metasched {

void EnvConfig::validate() const {
  if (delta <= 0) throw std::invalid_argument("env: delta must be > 0");
  if (rho < 0) throw std::invalid_argument("env: rho must be >= 0");
  if (lambda < 0) throw std::invalid_argument("env: lambda must be >= 0");
  if (horizon < 1) throw std::invalid_argument("env: horizon must be >= 1");
  if (trace_intervals < 1) throw std::invalid_argument("env: trace_intervals must be >= 1");
  if (regime && (regime->period < 1 || regime->lambdas.empty())) {
    throw std::invalid_argument("env: regime schedule needs period >= 1 and rates");
  }
}

double EnvConfig::lambda_at(int interval) const {
  if (!regime || regime->period <= 0 || regime->lambdas.empty()) return lambda;
  const int phase = ((interval - 1) / regime->period) % static_cast<int>(regime->lambdas.size());
  return regime->lambdas[phase];
}

void HostSpec::validate() const {
  if (ips_capacity <= 0 || ram_capacity <= 0 || disk_capacity <= 0) {
    throw std::invalid_argument("host " + name + ": capacities must be > 0");
  }
  if (cost_per_s < 0) throw std::invalid_argument("host " + name + ": negative cost");
  if (power_table.size() != 11) throw std::invalid_argument("host " + name + ": power table needs 11 entries");
  for (std::size_t i = 1; i < power_table.size(); ++i) {
    if (power_table[i] < power_table[i - 1]) {
      throw std::invalid_argument("host " + name + ": power table must be nondecreasing");
    }
  }
}

int ScheduleGraph::host_of(int task_id) const {
  for (const auto& [t, h] : edges) {
    if (t == task_id) return h;
  }
  return -1;
}

void ScheduleGraph::sort_edges() { std::sort(edges.begin(), edges.end()); }

double interpolate_power(const std::vector<double>& table, double u) {
  u = std::clamp(u, 0.0, 1.0);
  const double pos = u * 10.0;
  const int lo = static_cast<int>(pos);
  if (lo >= 10) return table[10];
  const double frac = pos - lo;
  return table[lo] + (table[lo + 1] - table[lo]) * frac;
}

double execution_cost(const std::vector<HostState>& states, const std::vector<HostSpec>& specs,
                      double delta, int completions) {
  double cost = 0.0;
  for (std::size_t j = 0; j < states.size(); ++j) {
    if (states[j].ips_used > 0) cost += specs[j].cost_per_s * delta;
  }
  return cost / std::max(1, completions);
}

double energy(const std::vector<HostState>& states, const std::vector<HostSpec>& specs, double delta) {
  double joules = 0.0;
  for (std::size_t j = 0; j < states.size(); ++j) {
    const double u = states[j].ips_used / specs[j].ips_capacity;
    joules += interpolate_power(specs[j].power_table, u) * delta;
  }
  return joules;
}

std::vector<Task> sample_arrivals(Rng& rng, double lambda, const std::vector<AppProfile>& profiles,
                                  int& next_task_id, int arrival_interval) {
  if (lambda < 0) throw std::invalid_argument("sample_arrivals: negative rate");
  std::vector<Task> out;
  const int count = rng.poisson(lambda);
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int app = rng.uniform_int(static_cast<int>(profiles.size()));
    const AppProfile& p = profiles[app];
    Task t;
    t.id = next_task_id++;
    t.app_type = app;
    t.ips_demand = rng.uniform(p.ips_lo, p.ips_hi);
    t.ram_demand = rng.uniform(p.ram_lo, p.ram_hi);
    t.disk_demand = rng.uniform(p.disk_lo, p.disk_hi);
    t.total_work = rng.uniform(p.work_lo, p.work_hi);
    t.remaining_work = t.total_work;
    t.arrival_interval = arrival_interval;
    out.push_back(t);
  }
  return out;
}

Env::Env(EnvConfig cfg, std::vector<HostSpec> hosts, std::vector<AppProfile> profiles)
    : cfg_(cfg), specs_(std::move(hosts)), profiles_(std::move(profiles)) {
  cfg_.validate();
  if (specs_.empty()) throw std::invalid_argument("env: at least one host required");
  if (profiles_.empty()) throw std::invalid_argument("env: at least one app profile required");
  for (const auto& h : specs_) h.validate();
  reset(cfg_.seed);
}

void Env::reset(uint64_t seed) {
  cfg_.seed = seed;
  interval_ = 0;
  interval_open_ = false;
  next_task_id_ = 0;
  active_.clear();
  completed_.clear();
  host_states_.assign(specs_.size(), HostState{});
  observed_.task_features = Tensor::zeros({0, 3});
  observed_.host_features = Tensor::zeros({static_cast<int>(specs_.size()), 3});
  observed_.schedule = ScheduleGraph{};
  log_ = EpisodeLog{};
  log_.num_hosts = static_cast<int>(specs_.size());
  log_.num_app_types = static_cast<int>(profiles_.size());
  arrivals_rng_ = Rng(seed, 0xA221);
  noise_rng_ = Rng(seed, 0x17E5);
}

int Env::begin_interval() {
  if (interval_open_) throw std::logic_error("env: begin_interval called twice");
  interval_open_ = true;
  const int t = interval_ + 1;
  std::vector<Task> fresh = sample_arrivals(arrivals_rng_, cfg_.lambda_at(t), profiles_, next_task_id_, t);
  for (auto& task : fresh) {
    if (!sla_table_.empty()) task.sla_deadline = sla_table_[task.app_type];
    active_.push_back(task);
  }
  return static_cast<int>(fresh.size());
}

Tensor Env::current_task_features() const {
  Tensor w = Tensor::zeros({static_cast<int>(active_.size()), 3});
  for (std::size_t i = 0; i < active_.size(); ++i) {
    w.at(static_cast<int>(i), 0) = static_cast<float>(active_[i].ips_demand);
    w.at(static_cast<int>(i), 1) = static_cast<float>(active_[i].ram_demand);
    w.at(static_cast<int>(i), 2) = static_cast<float>(active_[i].disk_demand);
  }
  return w;
}

IntervalRecord Env::step(const ScheduleGraph& decision, int policy_index, const std::string& policy_name,
                         double omega, double selector_time) {
  if (!interval_open_) throw std::logic_error("env: step without begin_interval");
  if (omega < 0 || selector_time < 0) throw std::invalid_argument("env: negative timing");
  const int t = interval_ + 1;

  // Validate the decision: one known host per active task, no strays.
  std::map<int, int> target;
  for (const auto& [task_id, host_id] : decision.edges) {
    if (host_id < 0 || host_id >= static_cast<int>(specs_.size())) {
      throw std::invalid_argument("decision references unknown host " + std::to_string(host_id));
    }
    if (!target.emplace(task_id, host_id).second) {
      throw std::invalid_argument("decision assigns task " + std::to_string(task_id) + " twice");
    }
  }
  std::set<int> active_ids;
  for (const auto& task : active_) active_ids.insert(task.id);
  for (const auto& [task_id, host_id] : target) {
    (void)host_id;
    if (!active_ids.count(task_id)) {
      throw std::invalid_argument("decision references unknown task " + std::to_string(task_id));
    }
  }
  for (int id : active_ids) {
    if (!target.count(id)) throw std::invalid_argument("decision misses active task " + std::to_string(id));
  }

  std::sort(active_.begin(), active_.end(), [](const Task& a, const Task& b) { return a.id < b.id; });

  // Placement with hard RAM/disk constraints. Residents hold their
  // reservation first; moves and new placements are repaired to the previous
  // host (or left unplaced) when the target cannot fit them.
  std::vector<double> ram_free(specs_.size()), disk_free(specs_.size());
  for (std::size_t j = 0; j < specs_.size(); ++j) {
    ram_free[j] = specs_[j].ram_capacity;
    disk_free[j] = specs_[j].disk_capacity;
  }
  for (const auto& task : active_) {
    if (task.host >= 0) {
      ram_free[task.host] -= task.ram_demand;
      disk_free[task.host] -= task.disk_demand;
    }
  }

  int migrations = 0, unplaced = 0;
  for (auto& task : active_) {
    const int want = target.at(task.id);
    const bool is_new = task.host < 0;
    if (!is_new && want == task.host) continue;
    if (is_new) {
      if (task.ram_demand <= ram_free[want] && task.disk_demand <= disk_free[want]) {
        task.host = want;
        ram_free[want] -= task.ram_demand;
        disk_free[want] -= task.disk_demand;
        double alloc = cfg_.allocation_time;
        if (cfg_.latency_noise) {
          alloc += noise_rng_.uniform(cfg_.latency_noise->alloc_jitter_lo, cfg_.latency_noise->alloc_jitter_hi);
        }
        task.waiting_time += selector_time + omega + alloc;
      }
    } else {
      // release own reservation, try the move, fall back on failure
      ram_free[task.host] += task.ram_demand;
      disk_free[task.host] += task.disk_demand;
      if (task.ram_demand <= ram_free[want] && task.disk_demand <= disk_free[want]) {
        task.host = want;
        ++migrations;
        ++task.migrations;
        task.migration_penalty += cfg_.migration_delay;
      }
      ram_free[task.host] -= task.ram_demand;
      disk_free[task.host] -= task.disk_demand;
    }
  }

  // Fair-share execution: each host splits its IPS proportionally to demand
  // when oversubscribed; a task never runs faster than its own demand.
  std::vector<double> host_demand(specs_.size(), 0.0);
  for (const auto& task : active_) {
    if (task.host >= 0) host_demand[task.host] += task.ips_demand;
  }

  IntervalRecord rec;
  rec.interval = t;
  rec.policy_index = policy_index;
  rec.policy_name = policy_name;
  rec.omega = omega;
  rec.selector_time = selector_time;
  rec.active_tasks = static_cast<int>(active_.size());

  std::vector<HostState> states(specs_.size());
  std::vector<Task> participants = active_;  // features snapshot before removal
  std::vector<Task> still_active;
  still_active.reserve(active_.size());
  for (auto& task : active_) {
    if (task.host < 0) {
      task.waiting_time += cfg_.delta;
      ++unplaced;
      still_active.push_back(task);
      continue;
    }
    const int j = task.host;
    const double share =
        host_demand[j] > specs_[j].ips_capacity ? specs_[j].ips_capacity / host_demand[j] : 1.0;
    const double rate = task.ips_demand * share;
    double work = rate * cfg_.delta;
    double busy = cfg_.delta;
    if (work >= task.remaining_work) {
      work = task.remaining_work;
      busy = rate > 0 ? work / rate : 0.0;
    }
    task.remaining_work -= work;
    task.work_done += work;
    task.exec_time += busy;
    states[j].ips_used += work / cfg_.delta;
    states[j].ram_used += task.ram_demand;
    states[j].disk_used += task.disk_demand;
    if (task.remaining_work <= 1e-7 * task.total_work) {
      task.remaining_work = 0;
      task.completion_interval = t;
      task.response_time = task.waiting_time + task.exec_time + task.migration_penalty;
      completed_.push_back(task);
      CompletionRecord cr;
      cr.task_id = task.id;
      cr.app_type = task.app_type;
      cr.arrival_interval = task.arrival_interval;
      cr.response_time = task.response_time;
      cr.waiting_time = task.waiting_time;
      rec.completed.push_back(cr);
    } else {
      still_active.push_back(task);
    }
  }
  active_ = std::move(still_active);

  rec.completions = static_cast<int>(rec.completed.size());
  rec.migrations = migrations;
  rec.unplaced = unplaced;
  rec.host_states = states;
  rec.host_cpu_pct.resize(specs_.size());
  for (std::size_t j = 0; j < specs_.size(); ++j) {
    rec.host_cpu_pct[j] = 100.0 * states[j].ips_used / specs_[j].ips_capacity;
  }
  rec.phi = execution_cost(states, specs_, cfg_.delta, rec.completions);
  double joules = 0.0;
  for (std::size_t j = 0; j < specs_.size(); ++j) {
    if (states[j].ips_used > 0) {
      joules +=
          interpolate_power(specs_[j].power_table, states[j].ips_used / specs_[j].ips_capacity) * cfg_.delta;
    }
  }
  rec.energy_j = joules;

  // Observation for the next interval's selector: every task that
  // participated in this interval (including just-completed ones) plus the
  // applied assignment.
  Tensor w = Tensor::zeros({static_cast<int>(participants.size()), 3});
  ScheduleGraph applied;
  for (std::size_t i = 0; i < participants.size(); ++i) {
    // placement happened before the snapshot and does not change during
    // execution, so the snapshot carries each task's final host
    const Task& snap = participants[i];
    w.at(static_cast<int>(i), 0) = static_cast<float>(snap.ips_demand);
    w.at(static_cast<int>(i), 1) = static_cast<float>(snap.ram_demand);
    w.at(static_cast<int>(i), 2) = static_cast<float>(snap.disk_demand);
    if (snap.host >= 0) applied.edges.emplace_back(snap.id, snap.host);
  }
  applied.sort_edges();
  observed_.task_features = std::move(w);
  Tensor h = Tensor::zeros({static_cast<int>(specs_.size()), 3});
  for (std::size_t j = 0; j < specs_.size(); ++j) {
    h.at(static_cast<int>(j), 0) = static_cast<float>(states[j].ips_used);
    h.at(static_cast<int>(j), 1) = static_cast<float>(states[j].ram_used);
    h.at(static_cast<int>(j), 2) = static_cast<float>(states[j].disk_used);
  }
  observed_.host_features = std::move(h);
  observed_.schedule = applied;

  log_.intervals.push_back(rec);
  interval_ = t;
  interval_open_ = false;
  return rec;
}

Metrics metrics_report(const EpisodeLog& log, const std::vector<double>& psi_per_app, double rho) {
  if (log.intervals.empty()) throw std::invalid_argument("metrics: empty episode");
  Metrics m;
  const int T = static_cast<int>(log.intervals.size());
  double phi_sum = 0, cpu_sum = 0, objective = 0;
  std::vector<double> responses, waits;
  int sla_ok = 0;
  for (const auto& rec : log.intervals) {
    phi_sum += rec.phi;
    m.total_energy_j += rec.energy_j;
    objective += rec.phi + rho * rec.omega;
    for (double pct : rec.host_cpu_pct) cpu_sum += pct;
    for (const auto& c : rec.completed) {
      responses.push_back(c.response_time);
      waits.push_back(c.waiting_time);
      if (c.app_type < 0 || c.app_type >= static_cast<int>(psi_per_app.size())) {
        throw std::invalid_argument("metrics: completion with unknown app type");
      }
      if (c.response_time <= psi_per_app[c.app_type]) ++sla_ok;
    }
  }
  m.avg_cost = phi_sum / T;
  m.avg_cpu_pct = cpu_sum / (static_cast<double>(T) * log.num_hosts);
  m.completed_tasks = static_cast<int>(responses.size());
  m.total_objective = objective;
  if (!responses.empty()) {
    m.avg_response_s = std::accumulate(responses.begin(), responses.end(), 0.0) / responses.size();
    m.avg_wait_s = std::accumulate(waits.begin(), waits.end(), 0.0) / waits.size();
    m.sla_rate = static_cast<double>(sla_ok) / responses.size();
    m.fairness = jain_fairness(responses);
  } else {
    m.sla_rate = 1.0;
    m.fairness = 1.0;
  }
  return m;
}

double jain_fairness(const std::vector<double>& values) {
  if (values.empty()) return 1.0;
  double sum = 0, sumsq = 0;
  for (double v : values) {
    sum += v;
    sumsq += v * v;
  }
  if (sumsq == 0) return 1.0;
  return sum * sum / (values.size() * sumsq);
}

std::vector<double> calibrate_sla(const EpisodeLog& log, const std::vector<std::string>& app_names,
                                  double percentile) {
  std::vector<std::vector<double>> by_type(app_names.size());
  for (const auto& rec : log.intervals) {
    for (const auto& c : rec.completed) {
      if (c.app_type >= 0 && c.app_type < static_cast<int>(by_type.size())) {
        by_type[c.app_type].push_back(c.response_time);
      }
    }
  }
  std::vector<double> psi(app_names.size());
  for (std::size_t a = 0; a < by_type.size(); ++a) {
    if (by_type[a].empty()) {
      throw std::runtime_error("calibrate_sla: no completed task of app type '" + app_names[a] + "'");
    }
    auto& v = by_type[a];
    std::sort(v.begin(), v.end());
    // nearest-rank percentile: ceil(p/100 * N), 1-based
    const int n = static_cast<int>(v.size());
    int rank = static_cast<int>(std::ceil(percentile / 100.0 * n));
    rank = std::clamp(rank, 1, n);
    psi[a] = v[rank - 1];
  }
  return psi;
}

}  // namespace metasched
