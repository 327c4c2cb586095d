#include "remaster/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "remaster/error.hpp"
#include "remaster/wav.hpp"

namespace remaster {
namespace {

constexpr int kMaxSeedAttempts = 10;

std::size_t seconds_to_samples(double seconds, double sample_rate) {
  return static_cast<std::size_t>(std::llround(seconds * sample_rate));
}

std::string triplet_stem(std::size_t index) {
  std::ostringstream s;
  s << 't';
  s.width(6);
  s.fill('0');
  s << index;
  return s.str();
}

}  // namespace

Manifest scan_corpus(const std::filesystem::path& dir, double min_duration_seconds) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("unreadable corpus directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  std::filesystem::recursive_directory_iterator it(dir, ec), end;
  if (ec) throw IoError("unreadable corpus directory: " + dir.string());
  for (; it != end; it.increment(ec)) {
    if (ec) throw IoError("error while scanning " + dir.string() + ": " + ec.message());
    if (!it->is_regular_file()) continue;
    auto ext = it->path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".wav") files.push_back(it->path());
  }
  std::sort(files.begin(), files.end());

  Manifest manifest;
  for (const auto& file : files) {
    WavInfo info;
    try {
      info = probe_wav(file);
    } catch (const WavError&) {
      continue;
    }
    if (info.channels != 2 || info.sample_rate != kCanonicalSampleRate) continue;
    if (info.duration_seconds() < min_duration_seconds) continue;
    auto id = std::filesystem::relative(file, dir).replace_extension().generic_string();
    manifest.push_back({std::move(id), file, info.duration_seconds()});
  }
  if (manifest.empty()) throw Error("zero usable songs in " + dir.string());
  return manifest;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : manifest)
    j.push_back({{"song_id", s.song_id}, {"path", s.path.generic_string()}, {"duration", s.duration}});
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  out << j.dump(2) << '\n';
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest: " + path.string());
  nlohmann::json j;
  in >> j;
  Manifest m;
  for (const auto& e : j)
    m.push_back({e.at("song_id").get<std::string>(), e.at("path").get<std::string>(),
                 e.at("duration").get<double>()});
  return m;
}

SongLibrary::SongLibrary(Manifest manifest)
    : manifest_(std::move(manifest)), cache_(manifest_.size()) {}

std::shared_ptr<const StereoWaveform> SongLibrary::audio(std::size_t index) {
  std::lock_guard lock(mutex_);
  auto& slot = cache_.at(index);
  if (!slot) slot = std::make_shared<const StereoWaveform>(load_wav(manifest_[index].path));
  return slot;
}

ContrastivePair make_contrastive_pair(const StereoWaveform& song, Rng& rng, const PairOptions& options) {
  if (!(options.min_seconds > 0.0 && options.min_seconds <= options.max_seconds))
    throw InvalidArgument("contrastive segment range must satisfy 0 < min <= max");
  const double fs = song.sample_rate();
  const std::size_t max_len = seconds_to_samples(options.max_seconds, fs);
  if (song.size() < max_len)
    throw InvalidArgument("song too short: " + std::to_string(song.size() / fs) + " s < " +
                          std::to_string(options.max_seconds) + " s maximum segment");
  const auto min_len = seconds_to_samples(options.min_seconds, fs);
  const auto len_a = static_cast<std::size_t>(rng.uniform_int(min_len, max_len));
  const auto len_b = static_cast<std::size_t>(rng.uniform_int(min_len, max_len));
  const auto off_a = static_cast<std::size_t>(rng.uniform_int(0, song.size() - len_a));
  const auto off_b = static_cast<std::size_t>(rng.uniform_int(0, song.size() - len_b));
  return {segment(song, off_a, len_a), segment(song, off_b, len_b), off_a, off_b};
}

ContrastivePair make_contrastive_pair(const SongEntry& song, Rng& rng, const PairOptions& options) {
  if (song.duration < options.max_seconds)
    throw InvalidArgument("song too short: " + song.song_id);
  return make_contrastive_pair(load_wav(song.path), rng, options);
}

TripletExample build_triplet(const std::string& song_id, const StereoWaveform& song, Rng& rng,
                             const TripletOptions& options) {
  const std::size_t len = options.segment_len;
  if (len == 0) throw InvalidArgument("segment length must be positive");
  if (song.size() < 2 * len)
    throw InvalidArgument("song too short: '" + song_id + "' has " + std::to_string(song.size()) +
                          " samples, triplets need " + std::to_string(2 * len));

  const auto first = static_cast<std::size_t>(rng.uniform_int(0, song.size() - 2 * len));
  const auto second = static_cast<std::size_t>(rng.uniform_int(first + len, song.size() - len));
  const bool swap = (rng.next_u64() & 1ULL) != 0;
  const std::size_t off_a = swap ? second : first;
  const std::size_t off_b = swap ? first : second;

  std::uint64_t seed1 = rng.next_u64();
  std::uint64_t seed2 = rng.next_u64();
  for (int attempt = 1; seed1 == seed2; ++attempt) {
    if (attempt >= kMaxSeedAttempts) throw Error("could not draw distinct manipulation seeds");
    seed2 = rng.next_u64();
  }
  FxParams m1 = sample_fx_params(seed1, options.ranges);
  FxParams m2 = sample_fx_params(seed2, options.ranges);

  if (options.scope == ChainScope::song) {
    const auto song_m1 = apply_chain(song, m1);
    const auto song_m2 = apply_chain(song, m2);
    return {segment(song_m1, off_a, len), segment(song_m2, off_a, len), segment(song_m2, off_b, len),
            std::move(m1), std::move(m2), song_id, {off_a, off_b}};
  }
  const auto a = segment(song, off_a, len);
  const auto b = segment(song, off_b, len);
  return {apply_chain(a, m1), apply_chain(a, m2), apply_chain(b, m2), std::move(m1), std::move(m2),
          song_id, {off_a, off_b}};
}

TripletExample build_triplet(const SongEntry& song, Rng& rng, const TripletOptions& options) {
  return build_triplet(song.song_id, load_wav(song.path), rng, options);
}

nlohmann::json to_json(const TripletRecord& r) {
  nlohmann::json j = {{"song_id", r.song_id}, {"a1_path", r.a1_path}, {"a2_path", r.a2_path},
                      {"b2_path", r.b2_path}, {"offset_a", r.offset_a}, {"offset_b", r.offset_b},
                      {"m1", r.m1},           {"m2", r.m2},           {"seed", r.seed}};
  if (r.output_path) j["output_path"] = *r.output_path;
  return j;
}

TripletRecord record_from_json(const nlohmann::json& j) {
  TripletRecord r;
  r.song_id = j.at("song_id").get<std::string>();
  r.a1_path = j.at("a1_path").get<std::string>();
  r.a2_path = j.at("a2_path").get<std::string>();
  r.b2_path = j.at("b2_path").get<std::string>();
  r.offset_a = j.at("offset_a").get<std::size_t>();
  r.offset_b = j.at("offset_b").get<std::size_t>();
  r.m1 = j.at("m1").get<FxParams>();
  r.m2 = j.at("m2").get<FxParams>();
  r.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("output_path")) r.output_path = j.at("output_path").get<std::string>();
  return r;
}

TripletExample fabricate_one(SongLibrary& library, std::size_t index, std::uint64_t seed,
                             const FabricateOptions& options) {
  if (library.size() == 0) throw InvalidArgument("empty manifest");
  Rng rng(Rng::mix(seed, index));
  const std::size_t song = options.sampling == SongSampling::round_robin
                               ? index % library.size()
                               : static_cast<std::size_t>(rng.uniform_int(0, library.size() - 1));
  const auto audio = library.audio(song);
  return build_triplet(library.manifest()[song].song_id, *audio, rng, options.triplet);
}

std::vector<TripletRecord> fabricate(const Manifest& manifest, std::size_t count, std::uint64_t seed,
                                     const std::filesystem::path& out_dir,
                                     const FabricateOptions& options) {
  if (manifest.empty()) throw InvalidArgument("empty manifest");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  SongLibrary library(manifest);
  std::vector<TripletRecord> records(count);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        auto t = fabricate_one(library, i, seed, options);
        const auto stem = triplet_stem(i);
        TripletRecord r{t.song_id, stem + "_a1.wav", stem + "_a2.wav", stem + "_b2.wav",
                        t.segment_offsets[0], t.segment_offsets[1], t.m1, t.m2, Rng::mix(seed, i),
                        std::nullopt};
        save_wav(t.input_a1, out_dir / r.a1_path);
        save_wav(t.target_a2, out_dir / r.a2_path);
        save_wav(t.reference_b2, out_dir / r.b2_path);
        records[i] = std::move(r);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = count;
      }
    }
  };

  std::size_t threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(count, 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  std::ofstream index(out_dir / kIndexFileName, std::ios::binary | std::ios::trunc);
  if (!index) throw IoError("cannot write index in " + out_dir.string());
  for (const auto& r : records) index << to_json(r).dump() << '\n';
  if (!index) throw IoError("write failed for index in " + out_dir.string());
  return records;
}

std::vector<TripletRecord> read_index(const std::filesystem::path& index_path) {
  std::ifstream in(index_path);
  if (!in) throw IoError("cannot read index: " + index_path.string());
  std::vector<TripletRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(index_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace remaster
