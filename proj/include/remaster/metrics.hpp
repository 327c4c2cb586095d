#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "remaster/audio.hpp"

namespace remaster {

double delta_rms(const StereoWaveform& target, const StereoWaveform& output);
double delta_rms_side(const StereoWaveform& target, const StereoWaveform& output);

struct FwSnrOptions {
  double frame_ms = 25.0;
  double gamma = 0.2;
  double min_db = -10.0;
  double max_db = 35.0;
};

/// Frequency-weighted segmental SNR of one channel in dB.
double fw_snr_channel(std::span<const double> target, std::span<const double> output, double sample_rate,
                      const FwSnrOptions& options = {});
/// Mean of the per-channel values.
double fw_snr(const StereoWaveform& target, const StereoWaveform& output, const FwSnrOptions& options = {});

enum class StoiDownmix { per_channel, mono };

/// Classic STOI of one channel (resampled to 10 kHz internally).
double stoi_channel(std::span<const double> target, std::span<const double> output, double sample_rate);
double stoi(const StereoWaveform& target, const StereoWaveform& output, StoiDownmix downmix = StoiDownmix::per_channel);

/// Windowed-sinc rational resampling (Kaiser window) to `to_rate`.
std::vector<double> resample_rational(std::span<const double> x, double from_rate, double to_rate);

struct MetricRecord {
  std::string pair_id;
  double delta_rms = 0.0;
  double delta_rms_side = 0.0;
  double fw_snr_db = 0.0;
  double stoi = 0.0;
};

struct MetricReport {
  std::string checkpoint_id;
  std::uint64_t dataset_seed = 0;
  std::string generated_at;
  std::vector<MetricRecord> records;
  std::optional<MetricRecord> aggregate;  // means; pair_id unused
};

MetricRecord compute_metrics(const std::string& pair_id, const StereoWaveform& target, const StereoWaveform& output,
                             StoiDownmix downmix = StoiDownmix::per_channel);

nlohmann::json to_json(const MetricReport& report);
void write_report(const MetricReport& report, const std::filesystem::path& path);

struct EvaluateOptions {
  std::filesystem::path encoder_checkpoint;
  std::filesystem::path cloner_checkpoint;
  std::uint64_t dataset_seed = 0;
  StoiDownmix downmix = StoiDownmix::per_channel;
  std::string generated_at;  // empty: current UTC time
};

/// Remasters every pair of a JSON-lines index (A1 with reference B2) and
/// scores the output against the target A2. Records carrying `output_path`
/// are scored from that file and need no models.
MetricReport evaluate_pairs(const std::filesystem::path& index_path, const EvaluateOptions& options);

}  // namespace remaster
