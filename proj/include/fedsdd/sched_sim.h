#pragma once

// Discrete-event model of round scheduling when clients are only
// intermittently available. Compares distillation-based methods that run
// KD and local training strictly in sequence with FedSDD, where only the
// main group waits on the previous round's distillation.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace fedsdd::sched {

using Time = std::int64_t;

inline constexpr Time kForever = std::numeric_limits<Time>::max() / 4;

struct CostModel {
  Time local_train_cost = 1;
  Time kd_cost = 1;
  std::vector<Time> per_client_cost;  // overrides local_train_cost when non-empty

  Time train_cost(int client) const;
  void validate(int client_count) const;
};

struct Interval {
  Time start = 0;
  Time end = kForever;  // half-open [start, end)

  bool operator==(const Interval&) const = default;
};

struct AvailabilityTrace {
  std::vector<std::vector<Interval>> windows;  // per client, sorted, disjoint
  std::size_t max_concurrent = 0;             // 0: no limit on simultaneous trainers

  static AvailabilityTrace always(int clients);
  // Every client is always reachable but only one may train at a time.
  static AvailabilityTrace one_at_a_time(int clients);

  int client_count() const { return static_cast<int>(windows.size()); }
  // Throws std::invalid_argument on overlapping or unsorted windows.
  void validate() const;
};

struct ScheduleProblem {
  int rounds = 1;
  int num_groups = 1;  // client c trains for group c mod num_groups; group 0 is the main model
  AvailabilityTrace trace;
  CostModel cost;

  int group_of(int client) const { return client % num_groups; }
};

enum class TaskKind { kTrain, kDistill };

struct ScheduleEvent {
  TaskKind kind = TaskKind::kTrain;
  int round = 1;
  int client = -1;  // -1 for the server
  int group = -1;
  Time start = 0;
  Time end = 0;

  std::string actor() const;
  std::string task() const;
};

struct Schedule {
  std::vector<ScheduleEvent> events;
  std::vector<Time> round_end;  // completion of each round's distillation
  Time makespan = 0;

  // Duration of the last round; the whole makespan when there is one round.
  Time steady_state_round_time() const;
};

// Every round: all trainings, then KD, then the next round.
Schedule simulate_sequential(const ScheduleProblem& problem);

// Group k's round t+1 training waits only for group k's round t aggregate,
// plus round t distillation when k == 0. KD runs on the server concurrently
// with client training. Returns the greedy schedule under these precedences,
// or the sequential schedule (also feasible here) when that finishes sooner.
Schedule simulate_fedsdd_parallel(const ScheduleProblem& problem);

enum class TeacherMethod { kFedDF, kFedSDD };

// Teacher forward cost per distillation batch.
double teacher_cost(TeacherMethod method, int participants, int num_models, int depth,
                    double per_model_cost);

// CSV rows: actor,task,start,end
void write_schedule_csv(const Schedule& schedule, std::ostream& out);

}  // namespace fedsdd::sched
