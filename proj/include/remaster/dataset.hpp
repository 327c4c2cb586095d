#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "remaster/audio.hpp"
#include "remaster/fx.hpp"
#include "remaster/rng.hpp"

namespace remaster {

struct SongEntry {
  std::string song_id;
  std::filesystem::path path;
  double duration = 0.0;  // seconds

  bool operator==(const SongEntry&) const = default;
};

using Manifest = std::vector<SongEntry>;

/// One entry per decodable 44.1 kHz stereo WAV under `dir` (recursive),
/// ordered by path. Songs shorter than `min_duration_seconds` are skipped.
Manifest scan_corpus(const std::filesystem::path& dir, double min_duration_seconds = 0.0);

void save_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest load_manifest(const std::filesystem::path& path);

// Decoded audio for every song of a manifest, loaded on first use.
class SongLibrary {
 public:
  explicit SongLibrary(Manifest manifest);

  const Manifest& manifest() const { return manifest_; }
  std::size_t size() const { return manifest_.size(); }
  std::shared_ptr<const StereoWaveform> audio(std::size_t index);

 private:
  Manifest manifest_;
  std::vector<std::shared_ptr<const StereoWaveform>> cache_;
  std::mutex mutex_;
};

struct PairOptions {
  double min_seconds = 5.0;
  double max_seconds = 10.0;
};

struct ContrastivePair {
  StereoWaveform first;
  StereoWaveform second;
  std::size_t offset_first = 0;
  std::size_t offset_second = 0;
};

/// Two segments of the same song with independently drawn lengths and offsets.
ContrastivePair make_contrastive_pair(const StereoWaveform& song, Rng& rng,
                                      const PairOptions& options = {});
ContrastivePair make_contrastive_pair(const SongEntry& song, Rng& rng,
                                      const PairOptions& options = {});

enum class ChainScope { segment, song };

struct TripletOptions {
  std::size_t segment_len = 131072;
  FxRanges ranges;
  ChainScope scope = ChainScope::segment;
};

struct TripletExample {
  StereoWaveform input_a1;
  StereoWaveform target_a2;
  StereoWaveform reference_b2;
  FxParams m1;
  FxParams m2;
  std::string song_id;
  std::array<std::size_t, 2> segment_offsets{};  // A, B
};

/// A1 = chain(A, m1), A2 = chain(A, m2), B2 = chain(B, m2) for disjoint
/// slices A and B of one song.
TripletExample build_triplet(const std::string& song_id, const StereoWaveform& song, Rng& rng,
                             const TripletOptions& options = {});
TripletExample build_triplet(const SongEntry& song, Rng& rng, const TripletOptions& options = {});

enum class SongSampling { round_robin, uniform };

struct FabricateOptions {
  TripletOptions triplet;
  SongSampling sampling = SongSampling::round_robin;
  std::size_t threads = 0;  // 0: hardware concurrency
};

// One line of the JSON-lines index. Paths are relative to the index file's
// directory. `output_path` is only read by evaluation (a precomputed output
// that replaces running the model).
struct TripletRecord {
  std::string song_id;
  std::string a1_path;
  std::string a2_path;
  std::string b2_path;
  std::size_t offset_a = 0;
  std::size_t offset_b = 0;
  FxParams m1;
  FxParams m2;
  std::uint64_t seed = 0;
  std::optional<std::string> output_path;
};

nlohmann::json to_json(const TripletRecord& r);
TripletRecord record_from_json(const nlohmann::json& j);

inline constexpr const char* kIndexFileName = "index.jsonl";

/// Writes `count` triplets plus index.jsonl into `out_dir`. Triplet i draws
/// from the stream seeded with Rng::mix(seed, i), so output does not depend
/// on the thread count.
std::vector<TripletRecord> fabricate(const Manifest& manifest, std::size_t count, std::uint64_t seed,
                                     const std::filesystem::path& out_dir,
                                     const FabricateOptions& options = {});

/// Rebuilds triplet i of a fabrication run entirely in memory.
TripletExample fabricate_one(SongLibrary& library, std::size_t index, std::uint64_t seed,
                             const FabricateOptions& options);

std::vector<TripletRecord> read_index(const std::filesystem::path& index_path);

}  // namespace remaster
