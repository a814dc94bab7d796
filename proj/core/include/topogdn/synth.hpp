#pragma once

// Seeded multivariate series: per-sensor sinusoids mixed through a coupling
// matrix, Gaussian noise, and injected anomalies with exact labels.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "topogdn/dataio.hpp"

namespace topogdn {

enum class AnomalyKind { Spike, LevelShift, RateChange };

std::string anomaly_kind_name(AnomalyKind kind);

/// Applied to the source signals of `sensors` over [start, start + duration),
/// before mixing. Spike adds magnitude * noise_sigma at each step, level-shift
/// adds magnitude, rate-change scales the offset from the interval's first
/// value by magnitude.
struct AnomalyInjection {
  AnomalyKind kind = AnomalyKind::Spike;
  std::vector<std::size_t> sensors;
  std::size_t start = 0;
  std::size_t duration = 1;
  double magnitude = 0;
};

struct SynthSpec {
  std::size_t sensors = 16;
  std::size_t steps = 4000;
  std::uint64_t seed = 42;
  double noise_sigma = 0.05;
  double period_min = 40;
  double period_max = 200;
  double amplitude_min = 0.5;
  double amplitude_max = 1.5;
  double self_weight = 0.6;  // lower bound of each sensor's weight on its own source
  std::size_t coupled_peers = 2;
  // Sensors i and j share a period and base phase when i % groups == j % groups;
  // 0 gives every sensor its own. Coupled peers are drawn from the same group.
  std::size_t groups = 4;
  double phase_jitter = 0.2;  // radians, uniform in [-j, j] per sensor
  std::vector<AnomalyInjection> anomalies;
};

/// The desk-scale default: 16 sensors, 4000 steps, seed 42, with anomalies
/// covering 5% of all steps, all of them inside the second half.
SynthSpec default_spec();

/// Seeded plan of non-overlapping injections covering `fraction` of the
/// spec's steps inside [region_start, steps).
std::vector<AnomalyInjection> plan_anomalies(const SynthSpec& spec, double fraction,
                                             std::size_t region_start);

/// Row-major sensors x sensors mixing matrix (row i = weights of sensor i).
std::vector<double> coupling_matrix(const SynthSpec& spec);

/// Throws SpecError for intervals outside [0, steps) or overlapping on a sensor.
void validate(const SynthSpec& spec);

TimeSeriesFrame generate(const SynthSpec& spec);

/// key=value lines, '#' comments, one
/// "anomaly=<kind>,<sensor;sensor...>,<start>,<duration>,<magnitude>" line per
/// injection. "anomaly_fraction" and "anomaly_start" request a seeded plan.
SynthSpec parse_spec(const std::string& text, const std::string& source = "<spec>");
SynthSpec load_spec(const std::filesystem::path& path);
std::string format_spec(const SynthSpec& spec);

}  // namespace topogdn
