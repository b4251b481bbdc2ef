#pragma once

// Synthetic datasets: an oscillating toy signal with ramp responses to sparse
// events, a minimal glucose/insulin/meal simulator, and carbohydrate
// corruption for the noise and missingness study.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "sivcast/transform.hpp"

namespace sivcast::datagen {

using Rng = std::mt19937_64;

// Toy ------------------------------------------------------------------------

struct ToyConfig {
  double baseline = 140.0;
  double amplitude = 40.0;
  double period = 48.0;          // timepoints
  double phase = 0.0;            // timepoints
  double gain = 0.1;             // target units per event unit per step
  std::size_t duration = 12;     // steps of rise, then as many of decay
  double event_rate = 1.0 / 40;  // per-timepoint event probability
  double magnitude_min = 20.0;
  double magnitude_max = 80.0;
  std::size_t length = 1200;
  double noise_sd = 0.0;
  std::uint64_t seed = 1;
};

void validate(const ToyConfig& cfg);

/// Event response at `tau` steps after an event of magnitude m: rises as
/// gain*m*tau up to `duration`, falls back to zero over the next `duration`.
double ramp_response(const ToyConfig& cfg, double magnitude, double tau);

/// Target in the glucose channel, event magnitudes in the carbs channel.
transform::IndividualSeries gen_toy(const ToyConfig& cfg, const std::string& id = "toy");

/// Toy series driven by explicit events (index -> magnitude); no sampling.
transform::IndividualSeries toy_from_events(const ToyConfig& cfg,
                                            const std::vector<double>& events,
                                            const std::string& id = "toy");

// Physiology -----------------------------------------------------------------

/// Rates are per minute. G in mg/dL, I in units of insulin on board, M in
/// mg/dL-equivalents of glucose waiting in the gut.
struct PhysioParams {
  double p1 = 0.02;          // glucose effectiveness
  double si = 0.005;         // insulin sensitivity
  double k_abs = 0.03;       // carb absorption rate
  double k_i = 0.02;         // insulin clearance rate
  double gb = 120.0;         // basal glucose
  double carb_ratio = 10.0;  // g per unit of insulin
  double carb_factor = 4.0;  // mg/dL per g of carbohydrate
};

void validate(const PhysioParams& p);

/// Draws one individual's parameters from fixed population ranges.
PhysioParams sample_physio_params(Rng& rng);

struct PhysioConfig {
  PhysioParams params;
  std::size_t days = 10;
  std::size_t meals_per_day = 3;
  double meal_min = 30.0;  // g
  double meal_max = 90.0;
  double meal_jitter = 30.0;  // minutes either side of each anchor
  double bolus_delay_min = 20.0;
  double bolus_delay_max = 120.0;
  double delay_probability = 0.75;
  double noise_sd = 2.0;  // mg/dL, additive Gaussian on sampled glucose
  std::uint64_t seed = 1;
};

void validate(const PhysioConfig& cfg);

struct Event {
  double minute = 0.0;
  double amount = 0.0;  // g for meals, units for boluses
};

struct EventSchedule {
  std::vector<Event> meals;
  std::vector<Event> boluses;
  std::vector<bool> delayed;  // per bolus
};

/// Meals at 08:00, 13:00 and 19:00 plus jitter; one bolus of carbs/CR per
/// meal, delayed with the configured probability.
EventSchedule schedule_events(const PhysioConfig& cfg, Rng& rng);

/// Integrates the model with RK4 at 1-minute steps from G=Gb, I=M=0 and
/// samples every 5 minutes. Events falling past the end are ignored.
transform::IndividualSeries simulate_physio(const PhysioConfig& cfg, const EventSchedule& events,
                                            const std::string& id = "physio");
/// Draws its own schedule from cfg.seed.
transform::IndividualSeries simulate_physio(const PhysioConfig& cfg,
                                            const std::string& id = "physio");

// Corruption -----------------------------------------------------------------

struct CorruptionSpec {
  double missing_fraction = 0.0;
  double noise_magnitude = 0.0;
  transform::Channel channel = transform::Channel::kCarbs;
  std::uint64_t seed = 1;
};

void validate(const CorruptionSpec& spec);

transform::IndividualSeries corrupt(const transform::IndividualSeries& series,
                                    const CorruptionSpec& spec);

// Datasets -------------------------------------------------------------------

enum class Generator { kToy, kPhysio };

const char* generator_name(Generator g);
Generator parse_generator(const std::string& name);

struct DatasetConfig {
  Generator generator = Generator::kToy;
  std::size_t individuals = 5;
  std::uint64_t seed = 1;
  ToyConfig toy;
  PhysioConfig physio;  // params are resampled per individual
};

struct GeneratedIndividual {
  transform::IndividualSeries series;
  std::uint64_t seed = 0;
  PhysioParams params;   // physio only
  EventSchedule events;  // physio only
};

/// Per-individual seeds are derived from (seed, index), so individuals can be
/// generated independently and in any order. Toy individuals differ in phase
/// and event draws; physio individuals also get their own parameters.
GeneratedIndividual generate_individual(const DatasetConfig& cfg, std::size_t index);
std::vector<GeneratedIndividual> generate_dataset(const DatasetConfig& cfg);

std::string individual_id(std::size_t index);

/// Writes <id>.csv per individual and manifest.json with seeds, parameters
/// and the event log.
void write_dataset(const std::filesystem::path& dir, const DatasetConfig& cfg,
                   const std::vector<GeneratedIndividual>& data, const std::string& config_hash);

/// Loads every CSV listed in dir/manifest.json, in manifest order.
std::vector<transform::IndividualSeries> load_dataset(const std::filesystem::path& dir);

}  // namespace sivcast::datagen
