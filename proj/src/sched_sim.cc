#include "fedsdd/sched_sim.h"

#include <algorithm>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <tuple>

namespace fedsdd::sched {

Time CostModel::train_cost(int client) const {
  if (per_client_cost.empty()) return local_train_cost;
  return per_client_cost.at(static_cast<std::size_t>(client));
}

void CostModel::validate(int client_count) const {
  if (local_train_cost < 0 || kd_cost < 0) throw std::invalid_argument("costs must be >= 0");
  if (!per_client_cost.empty()) {
    if (static_cast<int>(per_client_cost.size()) != client_count) {
      throw std::invalid_argument("per-client costs must list every client");
    }
    for (Time c : per_client_cost) {
      if (c < 0) throw std::invalid_argument("costs must be >= 0");
    }
  }
}

AvailabilityTrace AvailabilityTrace::always(int clients) {
  AvailabilityTrace trace;
  trace.windows.assign(static_cast<std::size_t>(clients), {Interval{0, kForever}});
  return trace;
}

AvailabilityTrace AvailabilityTrace::one_at_a_time(int clients) {
  AvailabilityTrace trace = always(clients);
  trace.max_concurrent = 1;
  return trace;
}

void AvailabilityTrace::validate() const {
  for (std::size_t c = 0; c < windows.size(); ++c) {
    Time previous_end = std::numeric_limits<Time>::min();
    for (const auto& w : windows[c]) {
      if (w.start < 0 || w.end <= w.start) {
        throw std::invalid_argument("client " + std::to_string(c) + " has an empty window");
      }
      if (w.start < previous_end) {
        throw std::invalid_argument("client " + std::to_string(c) +
                                    " has overlapping or unsorted windows");
      }
      previous_end = w.end;
    }
  }
}

std::string ScheduleEvent::actor() const {
  return client < 0 ? "server" : "client" + std::to_string(client);
}

std::string ScheduleEvent::task() const {
  if (kind == TaskKind::kDistill) return "kd:r" + std::to_string(round);
  return "train:r" + std::to_string(round) + ":g" + std::to_string(group);
}

Time Schedule::steady_state_round_time() const {
  if (round_end.empty()) return 0;
  if (round_end.size() == 1) return round_end.front();
  return round_end.back() - round_end[round_end.size() - 2];
}

namespace {

struct Task {
  ScheduleEvent event;
  std::vector<std::size_t> deps;
  bool done = false;
};

class Scheduler {
 public:
  Scheduler(const ScheduleProblem& problem, bool parallel) : problem_(problem) {
    problem.trace.validate();
    problem.cost.validate(problem.trace.client_count());
    if (problem.rounds < 1 || problem.num_groups < 1) {
      throw std::invalid_argument("need at least one round and one group");
    }
    if (problem.trace.client_count() < problem.num_groups) {
      throw std::invalid_argument("fewer clients than groups");
    }
    build(parallel);
  }

  Schedule run() {
    busy_.assign(static_cast<std::size_t>(problem_.trace.client_count()), {});
    std::size_t remaining = tasks_.size();
    while (remaining > 0) {
      std::optional<std::size_t> best;
      Time best_start = 0;
      for (std::size_t i = 0; i < tasks_.size(); ++i) {
        if (tasks_[i].done || !deps_done(i)) continue;
        const Time start = earliest_start(i);
        if (!best || better(i, start, *best, best_start)) {
          best = i;
          best_start = start;
        }
      }
      if (!best) throw std::logic_error("scheduler found no ready task");
      place(*best, best_start);
      --remaining;
    }
    Schedule schedule;
    schedule.round_end.assign(static_cast<std::size_t>(problem_.rounds), 0);
    for (const auto& t : tasks_) {
      schedule.events.push_back(t.event);
      if (t.event.kind == TaskKind::kDistill) {
        schedule.round_end[static_cast<std::size_t>(t.event.round - 1)] = t.event.end;
      }
      schedule.makespan = std::max(schedule.makespan, t.event.end);
    }
    std::sort(schedule.events.begin(), schedule.events.end(), [](const auto& a, const auto& b) {
      return std::tie(a.start, a.end, a.client) < std::tie(b.start, b.end, b.client);
    });
    return schedule;
  }

 private:
  std::size_t train_index(int round, int client) const {
    const auto clients = static_cast<std::size_t>(problem_.trace.client_count());
    return static_cast<std::size_t>(round - 1) * (clients + 1) + static_cast<std::size_t>(client);
  }
  std::size_t kd_index(int round) const {
    const auto clients = static_cast<std::size_t>(problem_.trace.client_count());
    return static_cast<std::size_t>(round - 1) * (clients + 1) + clients;
  }

  void build(bool parallel) {
    const int clients = problem_.trace.client_count();
    for (int t = 1; t <= problem_.rounds; ++t) {
      for (int c = 0; c < clients; ++c) {
        Task task;
        task.event = {TaskKind::kTrain, t, c, problem_.group_of(c), 0, 0};
        if (t > 1) {
          if (!parallel || problem_.group_of(c) == 0) task.deps.push_back(kd_index(t - 1));
          if (parallel) {
            // The group's previous aggregate, which includes this client's own task.
            for (int other = 0; other < clients; ++other) {
              if (problem_.group_of(other) == problem_.group_of(c)) {
                task.deps.push_back(train_index(t - 1, other));
              }
            }
          }
        }
        tasks_.push_back(std::move(task));
      }
      Task kd;
      kd.event = {TaskKind::kDistill, t, -1, -1, 0, 0};
      for (int c = 0; c < clients; ++c) kd.deps.push_back(train_index(t, c));
      if (t > 1) kd.deps.push_back(kd_index(t - 1));
      tasks_.push_back(std::move(kd));
    }
  }

  bool deps_done(std::size_t i) const {
    return std::all_of(tasks_[i].deps.begin(), tasks_[i].deps.end(),
                       [&](std::size_t d) { return tasks_[d].done; });
  }

  Time duration(const Task& t) const {
    return t.event.kind == TaskKind::kDistill ? problem_.cost.kd_cost
                                              : problem_.cost.train_cost(t.event.client);
  }

  // Earlier start wins; ties go to the earlier round, then the main group,
  // then the lower client id.
  bool better(std::size_t a, Time start_a, std::size_t b, Time start_b) const {
    const auto& ea = tasks_[a].event;
    const auto& eb = tasks_[b].event;
    const int ga = ea.group < 0 ? -1 : ea.group;
    const int gb = eb.group < 0 ? -1 : eb.group;
    return std::tie(start_a, ea.round, ga, ea.client) < std::tie(start_b, eb.round, gb, eb.client);
  }

  bool fits(int client, Time s, Time d) const {
    const auto& windows = problem_.trace.windows[static_cast<std::size_t>(client)];
    const bool inside = std::any_of(windows.begin(), windows.end(), [&](const Interval& w) {
      return w.start <= s && s + d <= w.end && s < w.end;
    });
    if (!inside) return false;
    if (d == 0) return true;
    for (const auto& [bs, be] : busy_[static_cast<std::size_t>(client)]) {
      if (s < be && bs < s + d) return false;
    }
    if (problem_.trace.max_concurrent > 0) {
      // Peak overlap inside [s, s+d) is reached at s or at some task start.
      std::vector<Time> probes{s};
      for (const auto& [bs, be] : all_busy_) {
        if (bs > s && bs < s + d) probes.push_back(bs);
      }
      for (Time p : probes) {
        std::size_t active = 0;
        for (const auto& [bs, be] : all_busy_) {
          if (bs <= p && p < be) ++active;
        }
        if (active >= problem_.trace.max_concurrent) return false;
      }
    }
    return true;
  }

  Time earliest_start(std::size_t i) const {
    Time ready = 0;
    for (std::size_t d : tasks_[i].deps) ready = std::max(ready, tasks_[d].event.end);
    const auto& ev = tasks_[i].event;
    if (ev.kind == TaskKind::kDistill) return std::max(ready, server_free_);

    const Time d = duration(tasks_[i]);
    std::vector<Time> candidates{ready};
    for (const auto& w : problem_.trace.windows[static_cast<std::size_t>(ev.client)]) {
      if (w.start > ready) candidates.push_back(w.start);
    }
    for (const auto& [bs, be] : all_busy_) {
      if (be > ready) candidates.push_back(be);
    }
    std::sort(candidates.begin(), candidates.end());
    for (Time s : candidates) {
      if (fits(ev.client, s, d)) return s;
    }
    throw std::invalid_argument("client " + std::to_string(ev.client) +
                                " is never available for its round " + std::to_string(ev.round) +
                                " training");
  }

  void place(std::size_t i, Time start) {
    auto& task = tasks_[i];
    task.event.start = start;
    task.event.end = start + duration(task);
    task.done = true;
    if (task.event.kind == TaskKind::kDistill) {
      server_free_ = task.event.end;
    } else if (task.event.end > task.event.start) {
      busy_[static_cast<std::size_t>(task.event.client)].emplace_back(task.event.start,
                                                                       task.event.end);
      all_busy_.emplace_back(task.event.start, task.event.end);
    }
  }

  const ScheduleProblem& problem_;
  std::vector<Task> tasks_;
  std::vector<std::vector<std::pair<Time, Time>>> busy_;
  std::vector<std::pair<Time, Time>> all_busy_;
  Time server_free_ = 0;
};

}  // namespace

Schedule simulate_sequential(const ScheduleProblem& problem) {
  return Scheduler(problem, false).run();
}

Schedule simulate_fedsdd_parallel(const ScheduleProblem& problem) {
  // Greedy list scheduling can let other groups take capacity the main group
  // needs (a classic list-scheduling anomaly under a concurrency cap). The
  // sequential plan satisfies every FedSDD precedence, so it is a valid
  // fallback whenever it finishes sooner.
  Schedule greedy = Scheduler(problem, true).run();
  Schedule sequential = Scheduler(problem, false).run();
  return sequential.makespan < greedy.makespan ? sequential : greedy;
}

double teacher_cost(TeacherMethod method, int participants, int num_models, int depth,
                    double per_model_cost) {
  if (per_model_cost < 0.0) throw std::invalid_argument("per-model cost must be >= 0");
  if (method == TeacherMethod::kFedDF) {
    if (participants < 1) throw std::invalid_argument("FedDF needs at least one participant");
    return static_cast<double>(participants) * per_model_cost;
  }
  if (num_models < 1 || depth < 1) throw std::invalid_argument("FedSDD needs K, R' >= 1");
  return static_cast<double>(num_models) * static_cast<double>(depth) * per_model_cost;
}

void write_schedule_csv(const Schedule& schedule, std::ostream& out) {
  out << "actor,task,start,end\n";
  for (const auto& e : schedule.events) {
    out << e.actor() << ',' << e.task() << ',' << e.start << ',' << e.end << '\n';
  }
}

}  // namespace fedsdd::sched
