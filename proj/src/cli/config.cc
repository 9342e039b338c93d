#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fedsdd/cli.h"
#include "fedsdd/rng.h"

namespace fedsdd::cli {

using orchestrate::ExperimentConfig;

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

template <typename T>
T parse_number(const std::string& s) {
  T value{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("'" + s + "' is not a number");
  return value;
}

template <>
double parse_number<double>(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("'" + s + "' is not a number");
  }
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("'" + s + "' is not a boolean");
}

template <typename T>
std::vector<T> parse_list(const std::string& s) {
  std::vector<T> out;
  for (const auto& part : split(s, ',')) out.push_back(parse_number<T>(part));
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
std::string format_list(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(xs[i]);
  }
  return out;
}

struct Key {
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <typename Get>
Key make_key(Get accessor) {
  using T = std::remove_reference_t<decltype(accessor(std::declval<ExperimentConfig&>()))>;
  Key key;
  key.get = [accessor](const ExperimentConfig& c) {
    const T& v = accessor(const_cast<ExperimentConfig&>(c));
    if constexpr (std::is_same_v<T, double>) {
      return format_double(v);
    } else if constexpr (std::is_same_v<T, bool>) {
      return std::string(v ? "true" : "false");
    } else if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else if constexpr (std::is_arithmetic_v<T>) {
      return std::to_string(v);
    } else {
      return format_list(v);
    }
  };
  key.set = [accessor](ExperimentConfig& c, const std::string& v) {
    T& dst = accessor(c);
    if constexpr (std::is_same_v<T, double>) {
      dst = parse_number<double>(v);
    } else if constexpr (std::is_same_v<T, bool>) {
      dst = parse_bool(v);
    } else if constexpr (std::is_same_v<T, std::string>) {
      dst = v;
    } else if constexpr (std::is_arithmetic_v<T>) {
      dst = parse_number<T>(v);
    } else {
      dst = parse_list<typename T::value_type>(v);
    }
  };
  return key;
}

#define FIELD(expr) make_key([](ExperimentConfig& c) -> auto& { return c.expr; })

// Ordered by (section, key) so serialization is canonical.
const std::map<std::string, std::map<std::string, Key>>& key_table() {
  static const auto* table = new std::map<std::string, std::map<std::string, Key>>{
      {"experiment",
       {
           {"method",
            {[](const ExperimentConfig& c) { return std::string(orchestrate::to_string(c.method)); },
             [](ExperimentConfig& c, const std::string& v) {
               c.method = orchestrate::parse_method(v);
             }}},
           {"rounds", FIELD(rounds)},
           {"num_models", FIELD(num_models)},
           {"checkpoints", FIELD(checkpoints)},
           {"total_clients", FIELD(total_clients)},
           {"participation", FIELD(participation)},
           {"alpha", FIELD(alpha)},
           {"seeds", FIELD(seeds)},
           {"shared_init", FIELD(shared_init)},
           {"checkpoint_distilled_main", FIELD(checkpoint_distilled_main)},
           {"deterministic", FIELD(deterministic)},
           {"probe_size", FIELD(probe_size)},
           {"warmup_rounds", FIELD(warmup_rounds)},
       }},
      {"data",
       {
           {"classes", FIELD(data.classes)},
           {"dim", FIELD(data.dim)},
           {"per_class", FIELD(data.per_class)},
           {"separation", FIELD(data.separation)},
           {"test_fraction", FIELD(data.test_fraction)},
           {"pool_fraction", FIELD(data.pool_fraction)},
           {"validation_fraction", FIELD(data.validation_fraction)},
           {"path", FIELD(data.path)},
       }},
      {"model",
       {
           {"hidden", FIELD(model.hidden)},
           {"activation",
            {[](const ExperimentConfig& c) {
               return std::string(c.model.activation == nn::Activation::kRelu ? "relu" : "tanh");
             },
             [](ExperimentConfig& c, const std::string& v) {
               if (v == "relu") {
                 c.model.activation = nn::Activation::kRelu;
               } else if (v == "tanh") {
                 c.model.activation = nn::Activation::kTanh;
               } else {
                 throw std::invalid_argument("activation must be relu or tanh");
               }
             }}},
       }},
      {"local",
       {
           {"trainer",
            {[](const ExperimentConfig& c) { return std::string(local::to_string(c.local.trainer)); },
             [](ExperimentConfig& c, const std::string& v) {
               c.local.trainer = local::parse_trainer_kind(v);
             }}},
           {"epochs", FIELD(local.epochs)},
           {"batch_size", FIELD(local.batch_size)},
           {"lr", FIELD(local.lr)},
           {"mu", FIELD(local.mu)},
       }},
      {"distill",
       {
           {"steps", FIELD(distill.steps)},
           {"batch_size", FIELD(distill.batch_size)},
           {"lr", FIELD(distill.lr)},
           {"tau", FIELD(distill.tau)},
       }},
      {"feddf",
       {
           {"drop_worst", FIELD(feddf.drop_worst)},
           {"early_stop", FIELD(feddf.early_stop)},
           {"eval_every", FIELD(feddf.eval_every)},
           {"patience", FIELD(feddf.patience)},
       }},
      {"ensemble_eval",
       {
           {"strategy",
            {[](const ExperimentConfig& c) {
               return std::string(orchestrate::to_string(c.ensemble_strategy));
             },
             [](ExperimentConfig& c, const std::string& v) {
               c.ensemble_strategy = orchestrate::parse_strategy(v);
             }}},
           {"depths", FIELD(eval_depths)},
       }},
  };
  return *table;
}

#undef FIELD

void set_key(ExperimentConfig& cfg, const std::string& section, const std::string& key,
             const std::string& value, int line) {
  const auto& table = key_table();
  const auto sec = table.find(section);
  if (sec == table.end()) throw ConfigError(line, "unknown section [" + section + "]");
  const auto entry = sec->second.find(key);
  if (entry == sec->second.end()) {
    throw ConfigError(line, "unknown key '" + key + "' in [" + section + "]");
  }
  try {
    entry->second.set(cfg, value);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(line, section + "." + key + ": " + e.what());
  }
}

// Calls visit(section, key, value, line) for every assignment in INI text.
template <typename Visit>
void scan_ini(std::string_view text, Visit visit) {
  std::istringstream in{std::string(text)};
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find_first_of("#;");
    const std::string content = trim(std::string_view(raw).substr(0, hash));
    if (content.empty()) continue;
    if (content.front() == '[') {
      if (content.back() != ']') throw ConfigError(line, "unterminated section header");
      section = trim(std::string_view(content).substr(1, content.size() - 2));
      continue;
    }
    const auto eq = content.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "expected key = value");
    if (section.empty()) throw ConfigError(line, "assignment before any [section]");
    const std::string key = trim(std::string_view(content).substr(0, eq));
    const std::string value = trim(std::string_view(content).substr(eq + 1));
    if (key.empty()) throw ConfigError(line, "empty key");
    visit(section, key, value, line);
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view text) {
  ExperimentConfig cfg;
  std::map<std::string, int> seen;
  scan_ini(text, [&](const std::string& section, const std::string& key, const std::string& value,
                     int line) {
    const std::string full = section + "." + key;
    if (auto it = seen.find(full); it != seen.end()) {
      throw ConfigError(line, full + " already set on line " + std::to_string(it->second));
    }
    seen[full] = line;
    set_key(cfg, section, key, value, line);
  });
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(0, e.what());
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "config not found: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config(buffer.str());
}

void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq) {
    throw ConfigError(0, "override must look like section.key=value");
  }
  set_key(cfg, trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
          trim(assignment.substr(eq + 1)), 0);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(0, e.what());
  }
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [section, keys] : key_table()) {
    out += "[" + section + "]\n";
    for (const auto& [key, accessor] : keys) out += key + " = " + accessor.get(cfg) + "\n";
  }
  return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(serialize_config(cfg))));
  return buf;
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  try {
    return parse_list<std::uint64_t>(trim(text));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(0, std::string("bad seed list: ") + e.what());
  }
}

sched::ScheduleProblem parse_schedsim_config(std::string_view text) {
  sched::ScheduleProblem problem;
  int clients = 0;
  std::string availability = "one_at_a_time";
  std::size_t max_concurrent = 0;
  bool max_concurrent_set = false;
  std::map<int, std::vector<sched::Interval>> trace;
  std::map<int, int> trace_lines;

  scan_ini(text, [&](const std::string& section, const std::string& key, const std::string& value,
                     int line) {
    try {
      if (section == "schedsim") {
        if (key == "rounds") {
          problem.rounds = parse_number<int>(value);
        } else if (key == "num_groups") {
          problem.num_groups = parse_number<int>(value);
        } else if (key == "clients") {
          clients = parse_number<int>(value);
        } else if (key == "availability") {
          if (value != "always" && value != "one_at_a_time" && value != "trace") {
            throw std::invalid_argument("availability must be always, one_at_a_time or trace");
          }
          availability = value;
        } else if (key == "max_concurrent") {
          max_concurrent = parse_number<std::size_t>(value);
          max_concurrent_set = true;
        } else if (key == "local_cost") {
          problem.cost.local_train_cost = parse_number<sched::Time>(value);
        } else if (key == "kd_cost") {
          problem.cost.kd_cost = parse_number<sched::Time>(value);
        } else if (key == "client_costs") {
          problem.cost.per_client_cost = parse_list<sched::Time>(value);
        } else {
          throw ConfigError(line, "unknown key '" + key + "' in [schedsim]");
        }
      } else if (section == "trace") {
        const int client = parse_number<int>(key);
        std::vector<sched::Interval> windows;
        for (const auto& part : split(value, ',')) {
          const auto dash = part.find('-');
          if (dash == std::string::npos) throw std::invalid_argument("window must be start-end");
          const std::string end_text = trim(std::string_view(part).substr(dash + 1));
          const sched::Time start = parse_number<sched::Time>(trim(std::string_view(part).substr(0, dash)));
          const sched::Time end =
              end_text == "inf" ? sched::kForever : parse_number<sched::Time>(end_text);
          if (end <= start) throw std::invalid_argument("window end must exceed its start");
          if (!windows.empty() && start < windows.back().end) {
            throw std::invalid_argument("windows must be sorted and disjoint");
          }
          windows.push_back({start, end});
        }
        if (trace.count(client)) throw std::invalid_argument("client listed twice");
        trace[client] = std::move(windows);
        trace_lines[client] = line;
      } else {
        throw ConfigError(line, "unknown section [" + section + "]");
      }
    } catch (const std::invalid_argument& e) {
      throw ConfigError(line, e.what());
    }
  });

  if (clients < 1) throw ConfigError(0, "schedsim.clients must be >= 1");
  if (problem.rounds < 1 || problem.num_groups < 1) {
    throw ConfigError(0, "schedsim.rounds and schedsim.num_groups must be >= 1");
  }
  if (availability == "trace") {
    problem.trace.windows.assign(static_cast<std::size_t>(clients), {});
    for (auto& [client, windows] : trace) {
      if (client < 0 || client >= clients) {
        throw ConfigError(trace_lines[client], "trace client " + std::to_string(client) +
                                                   " outside [0, " + std::to_string(clients) + ")");
      }
      problem.trace.windows[static_cast<std::size_t>(client)] = std::move(windows);
    }
    for (int c = 0; c < clients; ++c) {
      if (problem.trace.windows[static_cast<std::size_t>(c)].empty()) {
        throw ConfigError(0, "trace has no windows for client " + std::to_string(c));
      }
    }
  } else {
    if (!trace.empty()) {
      throw ConfigError(trace_lines.begin()->second, "[trace] requires availability = trace");
    }
    problem.trace = availability == "always" ? sched::AvailabilityTrace::always(clients)
                                             : sched::AvailabilityTrace::one_at_a_time(clients);
  }
  if (max_concurrent_set) problem.trace.max_concurrent = max_concurrent;
  try {
    problem.cost.validate(clients);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(0, e.what());
  }
  return problem;
}

}  // namespace fedsdd::cli
