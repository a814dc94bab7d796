#include "topogdn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "topogdn/errors.hpp"
#include "topogdn/rng.hpp"

namespace topogdn {

namespace {

constexpr std::uint64_t kShapeStream = 1;
constexpr std::uint64_t kCouplingStream = 2;
constexpr std::uint64_t kNoiseStream = 3;
constexpr std::uint64_t kPlanStream = 4;

constexpr std::size_t kMinDuration = 10;
constexpr std::size_t kMaxDuration = 30;
constexpr std::size_t kMinGap = 30;

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

AnomalyKind parse_kind(const std::string& name, const std::string& where) {
  if (name == "spike") return AnomalyKind::Spike;
  if (name == "level-shift" || name == "level_shift") return AnomalyKind::LevelShift;
  if (name == "rate-change" || name == "rate_change") return AnomalyKind::RateChange;
  throw SpecError(fmt::format("{}: unknown anomaly type '{}'", where, name));
}

bool same_group(const SynthSpec& spec, std::size_t i, std::size_t j) {
  return spec.groups > 0 && i % spec.groups == j % spec.groups;
}

}  // namespace

std::string anomaly_kind_name(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::Spike: return "spike";
    case AnomalyKind::LevelShift: return "level-shift";
    case AnomalyKind::RateChange: return "rate-change";
  }
  return "unknown";
}

std::vector<AnomalyInjection> plan_anomalies(const SynthSpec& spec, double fraction,
                                             std::size_t region_start) {
  if (!(fraction >= 0.0 && fraction < 1.0))
    throw SpecError(fmt::format("anomaly fraction must lie in [0, 1), got {}", fraction));
  if (region_start >= spec.steps)
    throw SpecError(fmt::format("anomaly region starts at {} beyond {} steps", region_start,
                                spec.steps));
  auto total = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(spec.steps)));
  if (total == 0) return {};
  Rng rng = Rng(spec.seed).fork(kPlanStream);

  std::vector<std::size_t> durations;
  std::size_t used = 0;
  while (used < total) {
    std::size_t d = kMinDuration + rng.below(kMaxDuration - kMinDuration + 1);
    d = std::min(d, total - used);
    durations.push_back(d);
    used += d;
  }
  // A short remainder is folded into its predecessor.
  if (durations.size() > 1 && durations.back() < kMinDuration) {
    std::size_t tail = durations.back();
    durations.pop_back();
    durations.back() += tail;
  }
  std::size_t count = durations.size();
  std::size_t region = spec.steps - region_start;
  if (region < total + (count + 1) * kMinGap)
    throw SpecError(fmt::format("{} anomalous steps do not fit into a region of {} steps", total,
                                region));
  std::size_t spare = region - total - (count + 1) * kMinGap;
  std::vector<double> weights(count + 1);
  double wsum = 0;
  for (auto& w : weights) wsum += (w = rng.uniform(0.5, 1.5));
  std::vector<std::size_t> gaps(count + 1);
  for (std::size_t g = 0; g <= count; ++g)
    gaps[g] = kMinGap + static_cast<std::size_t>(std::floor(weights[g] / wsum * double(spare)));

  std::vector<AnomalyInjection> plan;
  std::size_t t = region_start + gaps[0];
  for (std::size_t k = 0; k < count; ++k) {
    AnomalyInjection a;
    a.kind = static_cast<AnomalyKind>(k % 3);
    a.start = t;
    a.duration = durations[k];
    a.sensors = {static_cast<std::size_t>(rng.below(spec.sensors))};
    double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    switch (a.kind) {
      case AnomalyKind::Spike: a.magnitude = sign * rng.uniform(20.0, 30.0); break;
      case AnomalyKind::LevelShift: a.magnitude = sign * rng.uniform(0.8, 1.2); break;
      case AnomalyKind::RateChange: a.magnitude = rng.uniform(3.0, 5.0); break;
    }
    plan.push_back(std::move(a));
    t += durations[k] + gaps[k + 1];
  }
  return plan;
}

SynthSpec default_spec() {
  SynthSpec spec;
  spec.anomalies = plan_anomalies(spec, 0.05, spec.steps / 2);
  return spec;
}

std::vector<double> coupling_matrix(const SynthSpec& spec) {
  const std::size_t n = spec.sensors;
  std::vector<double> m(n * n, 0.0);
  Rng rng = Rng(spec.seed).fork(kCouplingStream);
  std::size_t peers = n > 1 ? std::min(spec.coupled_peers, n - 1) : 0;
  for (std::size_t i = 0; i < n; ++i) {
    double self = peers == 0 ? 1.0 : rng.uniform(spec.self_weight, 0.5 * (1.0 + spec.self_weight));
    m[i * n + i] = self;
    if (peers == 0) continue;
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && same_group(spec, i, j)) others.push_back(j);
    if (others.size() < peers) {
      others.clear();
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) others.push_back(j);
    }
    rng.shuffle(others);
    std::vector<double> w(peers);
    double wsum = 0;
    for (auto& x : w) wsum += (x = rng.uniform(0.5, 1.5));
    for (std::size_t p = 0; p < peers; ++p) m[i * n + others[p]] += (1.0 - self) * w[p] / wsum;
  }
  return m;
}

void validate(const SynthSpec& spec) {
  if (spec.sensors < 2) throw SpecError("a spec needs at least 2 sensors");
  if (spec.steps < 2) throw SpecError("a spec needs at least 2 steps");
  if (!(spec.noise_sigma >= 0.0)) throw SpecError("noise_sigma must be non-negative");
  if (!(spec.period_min > 0.0 && spec.period_max >= spec.period_min))
    throw SpecError("periods must satisfy 0 < period_min <= period_max");
  if (!(spec.amplitude_max >= spec.amplitude_min))
    throw SpecError("amplitude_max must not be below amplitude_min");
  if (!(spec.self_weight > 0.0 && spec.self_weight <= 1.0))
    throw SpecError("self_weight must lie in (0, 1]");
  if (!(spec.phase_jitter >= 0.0)) throw SpecError("phase_jitter must be non-negative");
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> busy(spec.sensors);
  for (std::size_t k = 0; k < spec.anomalies.size(); ++k) {
    const auto& a = spec.anomalies[k];
    if (a.duration == 0) throw SpecError(fmt::format("anomaly {} has zero duration", k));
    if (a.start >= spec.steps || a.duration > spec.steps - a.start)
      throw SpecError(fmt::format("anomaly {} [{}, {}) leaves [0, {})", k, a.start,
                                  a.start + a.duration, spec.steps));
    if (a.sensors.empty()) throw SpecError(fmt::format("anomaly {} names no sensor", k));
    for (auto s : a.sensors) {
      if (s >= spec.sensors)
        throw SpecError(fmt::format("anomaly {} names sensor {} of {}", k, s, spec.sensors));
      for (auto [b, e] : busy[s])
        if (a.start < e && b < a.start + a.duration)
          throw SpecError(fmt::format("anomaly {} overlaps [{}, {}) on sensor {}", k, b, e, s));
      busy[s].emplace_back(a.start, a.start + a.duration);
    }
  }
}

TimeSeriesFrame generate(const SynthSpec& spec) {
  validate(spec);
  const std::size_t n = spec.sensors, T = spec.steps;
  Rng shape = Rng(spec.seed).fork(kShapeStream);
  std::vector<double> source(n * T);
  std::size_t bases = spec.groups > 0 ? std::min(spec.groups, n) : n;
  std::vector<double> base_period(bases), base_phase(bases);
  for (std::size_t g = 0; g < bases; ++g) {
    base_period[g] = shape.uniform(spec.period_min, spec.period_max);
    base_phase[g] = shape.uniform(0.0, 2.0 * std::numbers::pi);
  }
  for (std::size_t i = 0; i < n; ++i) {
    double period = base_period[i % bases];
    double amplitude = shape.uniform(spec.amplitude_min, spec.amplitude_max);
    double phase = base_phase[i % bases];
    if (spec.groups > 0) phase += shape.uniform(-spec.phase_jitter, spec.phase_jitter);
    for (std::size_t t = 0; t < T; ++t)
      source[i * T + t] =
          amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period + phase);
  }

  std::vector<int> labels(T, 0);
  for (const auto& a : spec.anomalies) {
    for (auto s : a.sensors) {
      double* u = source.data() + s * T;
      double anchor = u[a.start];
      for (std::size_t t = a.start; t < a.start + a.duration; ++t) switch (a.kind) {
          case AnomalyKind::Spike: u[t] += a.magnitude * spec.noise_sigma; break;
          case AnomalyKind::LevelShift: u[t] += a.magnitude; break;
          case AnomalyKind::RateChange: u[t] = anchor + a.magnitude * (u[t] - anchor); break;
        }
    }
    for (std::size_t t = a.start; t < a.start + a.duration; ++t) labels[t] = 1;
  }

  auto mix = coupling_matrix(spec);
  Rng noise = Rng(spec.seed).fork(kNoiseStream);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back(fmt::format("s{:02d}", i));
  TimeSeriesFrame frame = TimeSeriesFrame::zeros(std::move(names), T);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double w = mix[i * n + j];
        if (w != 0.0) acc += w * source[j * T + t];
      }
      frame.at(i, t) = acc + spec.noise_sigma * noise.normal();
    }
  frame.labels = std::move(labels);
  return frame;
}

SynthSpec parse_spec(const std::string& text, const std::string& source) {
  SynthSpec spec;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  double fraction = -1.0;
  std::size_t region_start = 0;
  bool region_given = false;
  auto number = [&](const std::string& v, const std::string& key) {
    std::size_t used = 0;
    double x = 0;
    try {
      x = std::stod(v, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used != v.size() || v.empty())
      throw SpecError(fmt::format("{}:{}: '{}' expects a number, got '{}'", source, lineno, key, v));
    return x;
  };
  auto count = [&](const std::string& v, const std::string& key) {
    double x = number(v, key);
    if (x < 0 || x != std::floor(x))
      throw SpecError(
          fmt::format("{}:{}: '{}' expects a non-negative integer, got '{}'", source, lineno, key, v));
    return static_cast<std::size_t>(x);
  };
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw SpecError(fmt::format("{}:{}: expected key=value, got '{}'", source, lineno, line));
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "sensors") spec.sensors = count(value, key);
    else if (key == "steps") spec.steps = count(value, key);
    else if (key == "seed") spec.seed = count(value, key);
    else if (key == "noise_sigma") spec.noise_sigma = number(value, key);
    else if (key == "period_min") spec.period_min = number(value, key);
    else if (key == "period_max") spec.period_max = number(value, key);
    else if (key == "amplitude_min") spec.amplitude_min = number(value, key);
    else if (key == "amplitude_max") spec.amplitude_max = number(value, key);
    else if (key == "self_weight") spec.self_weight = number(value, key);
    else if (key == "coupled_peers") spec.coupled_peers = count(value, key);
    else if (key == "groups") spec.groups = count(value, key);
    else if (key == "phase_jitter") spec.phase_jitter = number(value, key);
    else if (key == "anomaly_fraction") fraction = number(value, key);
    else if (key == "anomaly_start") {
      region_start = count(value, key);
      region_given = true;
    } else if (key == "anomaly") {
      std::vector<std::string> f;
      std::stringstream ss(value);
      std::string cell;
      while (std::getline(ss, cell, ',')) f.push_back(trim(cell));
      if (f.size() != 5)
        throw SpecError(fmt::format(
            "{}:{}: anomaly needs kind,sensors,start,duration,magnitude; got '{}'", source, lineno,
            value));
      AnomalyInjection a;
      a.kind = parse_kind(f[0], fmt::format("{}:{}", source, lineno));
      std::stringstream sensors(f[1]);
      while (std::getline(sensors, cell, ';')) a.sensors.push_back(count(trim(cell), "sensors"));
      a.start = count(f[2], "start");
      a.duration = count(f[3], "duration");
      a.magnitude = number(f[4], "magnitude");
      spec.anomalies.push_back(std::move(a));
    } else {
      throw SpecError(fmt::format("{}:{}: unknown key '{}'", source, lineno, key));
    }
  }
  if (fraction >= 0.0) {
    if (!spec.anomalies.empty())
      throw SpecError(source + ": anomaly_fraction cannot be combined with explicit anomaly lines");
    spec.anomalies = plan_anomalies(spec, fraction, region_given ? region_start : spec.steps / 2);
  }
  validate(spec);
  return spec;
}

SynthSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open spec file '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_spec(buf.str(), path.string());
}

std::string format_spec(const SynthSpec& spec) {
  std::string out;
  out += fmt::format("sensors={}\nsteps={}\nseed={}\n", spec.sensors, spec.steps, spec.seed);
  out += fmt::format("noise_sigma={}\nperiod_min={}\nperiod_max={}\n", spec.noise_sigma,
                     spec.period_min, spec.period_max);
  out += fmt::format("amplitude_min={}\namplitude_max={}\nself_weight={}\ncoupled_peers={}\n",
                     spec.amplitude_min, spec.amplitude_max, spec.self_weight, spec.coupled_peers);
  out += fmt::format("groups={}\nphase_jitter={}\n", spec.groups, spec.phase_jitter);
  for (const auto& a : spec.anomalies) {
    std::string sensors;
    for (std::size_t k = 0; k < a.sensors.size(); ++k)
      sensors += (k ? ";" : "") + std::to_string(a.sensors[k]);
    out += fmt::format("anomaly={},{},{},{},{}\n", anomaly_kind_name(a.kind), sensors, a.start,
                       a.duration, a.magnitude);
  }
  return out;
}

}  // namespace topogdn
