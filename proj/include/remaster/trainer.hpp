#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "remaster/dataset.hpp"
#include "remaster/metrics.hpp"

namespace remaster {

enum class TrainPhase { pretrain, clone };

// Every training hyperparameter. Stored on disk as a flat `key = value` file
// whose keys are exactly these field names; lists are comma separated.
struct TrainConfig {
  TrainPhase phase = TrainPhase::clone;
  std::string preset = "tiny";
  std::size_t batch_size = 0;  // 0: 16 for pretrain, 4 for clone
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t epochs = 200;
  std::size_t steps = 0;  // 0: epochs * steps_per_epoch()
  std::size_t triplet_count = 1000;
  std::size_t adv_start_epoch = 100;
  double rho = 100.0;
  double temperature = 0.5;
  double lambda_adv = 1.0;
  double segment_min_seconds = 5.0;
  double segment_max_seconds = 10.0;
  std::size_t segment_samples = 131072;
  std::vector<std::size_t> fft_sizes{4096, 2048, 1024, 512};
  double log_weight = 1.0;
  ChainScope chain_scope = ChainScope::segment;
  std::uint64_t seed = 0;
  std::string checkpoint_dir = "checkpoints";
  std::size_t checkpoint_every = 0;  // steps; 0: only at the end
  std::size_t workers = 1;           // data producer threads; 0: produce inline
  std::size_t queue_capacity = 4;
  std::size_t validation_every = 0;  // epochs; 0: off
  std::string validation_index;
  StoiDownmix stoi_downmix = StoiDownmix::per_channel;

  static TrainConfig defaults(TrainPhase phase);
  std::size_t effective_batch_size() const;
  std::size_t steps_per_epoch() const;
  std::size_t total_steps() const;
  void validate() const;
  /// Fields that must agree between a checkpoint and a resumed run.
  nlohmann::json hashed_fields() const;
};

TrainConfig parse_train_config(const std::string& text, std::optional<TrainPhase> phase = std::nullopt);
TrainConfig load_train_config(const std::filesystem::path& path, std::optional<TrainPhase> phase = std::nullopt);
/// `key = value` text that parses back to the same config.
std::string format_train_config(const TrainConfig& config);

// Supplies training triplets by index.
class TripletSource {
 public:
  virtual ~TripletSource() = default;
  virtual std::size_t size() const = 0;
  /// Must be safe to call concurrently.
  virtual TripletExample get(std::size_t index) = 0;
};

/// Triplets fabricated on the fly from a corpus, triplet i seeded by Rng::mix(seed, i).
std::unique_ptr<TripletSource> make_virtual_triplets(const Manifest& manifest, std::size_t count, std::uint64_t seed,
                                                     const TripletOptions& options);
/// Triplets read from a fabricated index.jsonl.
std::unique_ptr<TripletSource> make_indexed_triplets(const std::filesystem::path& index_path);

struct TrainResult {
  std::uint64_t final_step = 0;
  std::vector<double> losses;      // NT-Xent (pretrain) or L_psi (clone), one per step run
  std::filesystem::path checkpoint;
  std::filesystem::path log;
};

inline constexpr const char* kEncoderCheckpointName = "encoder.ckpt";
inline constexpr const char* kClonerCheckpointName = "cloner.ckpt";
inline constexpr const char* kTrainLogName = "train_log.jsonl";

/// Contrastive pretraining of the encoder. Writes encoder.ckpt and
/// train_log.jsonl into `out_dir`; `resume` continues from a checkpoint.
TrainResult pretrain_encoder(const TrainConfig& config, const Manifest& manifest, const std::filesystem::path& out_dir,
                             const std::optional<std::filesystem::path>& resume = std::nullopt);

/// Cloner (and, from adv_start_epoch on, discriminator) training against a
/// frozen encoder. Writes cloner.ckpt and train_log.jsonl into `out_dir`.
TrainResult train_cloner(const TrainConfig& config, TripletSource& triplets, const std::filesystem::path& encoder_ckpt,
                         const std::filesystem::path& out_dir,
                         const std::optional<std::filesystem::path>& resume = std::nullopt);

}  // namespace remaster
