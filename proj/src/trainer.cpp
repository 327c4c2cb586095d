#include "remaster/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <variant>

#include "remaster/checkpoint.hpp"
#include "remaster/cloner.hpp"
#include "remaster/discriminator.hpp"
#include "remaster/encoder.hpp"
#include "remaster/error.hpp"
#include "remaster/inference.hpp"
#include "remaster/nn/adam.hpp"
#include "remaster/objectives.hpp"
#include "remaster/wav.hpp"

namespace remaster {

// ---- config ---------------------------------------------------------------

TrainConfig TrainConfig::defaults(TrainPhase phase) {
  TrainConfig c;
  c.phase = phase;
  return c;
}

std::size_t TrainConfig::effective_batch_size() const {
  if (batch_size != 0) return batch_size;
  return phase == TrainPhase::pretrain ? 16 : 4;
}

std::size_t TrainConfig::steps_per_epoch() const {
  const std::size_t b = effective_batch_size();
  return (triplet_count + b - 1) / b;
}

std::size_t TrainConfig::total_steps() const { return steps != 0 ? steps : epochs * steps_per_epoch(); }

void TrainConfig::validate() const {
  auto positive = [](bool ok, const char* key) {
    if (!ok) throw InvalidArgument(std::string("config: ") + key + " must be positive");
  };
  positive(lr > 0.0, "lr");
  positive(beta1 > 0.0 && beta1 < 1.0, "beta1");
  positive(beta2 > 0.0 && beta2 < 1.0, "beta2");
  positive(epochs > 0, "epochs");
  positive(triplet_count > 0, "triplet_count");
  positive(rho > 0.0, "rho");
  positive(temperature > 0.0, "temperature");
  positive(lambda_adv >= 0.0, "lambda_adv");
  positive(segment_min_seconds > 0.0 && segment_min_seconds <= segment_max_seconds, "segment_min_seconds");
  positive(segment_samples > 0, "segment_samples");
  positive(queue_capacity > 0, "queue_capacity");
  if (adv_start_epoch > epochs) throw InvalidArgument("config: adv_start_epoch must not exceed epochs");
  if (phase == TrainPhase::pretrain && effective_batch_size() < 2)
    throw InvalidArgument("config: contrastive pretraining needs batch_size >= 2 (no negatives otherwise)");
  if (preset != "tiny" && preset != "canonical") throw InvalidArgument("config: preset must be tiny or canonical");
  MssSpec{fft_sizes, 0.75, 1e-7, log_weight}.validate();
}

namespace {

const char* phase_name(TrainPhase p) { return p == TrainPhase::pretrain ? "pretrain" : "clone"; }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    const auto x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return static_cast<std::size_t>(x);
  } catch (const std::exception&) {
    throw InvalidArgument("config: " + key + " expects a non-negative integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(x)) throw std::invalid_argument("bad");
    return x;
  } catch (const std::exception&) {
    throw InvalidArgument("config: " + key + " expects a number, got '" + v + "'");
  }
}

}  // namespace

TrainConfig parse_train_config(const std::string& text, std::optional<TrainPhase> phase) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (kv.contains(key)) throw InvalidArgument("config: duplicate key " + key);
    kv[key] = trim(line.substr(eq + 1));
  }

  TrainPhase ph = phase.value_or(TrainPhase::clone);
  if (auto it = kv.find("phase"); it != kv.end()) {
    if (it->second == "pretrain") ph = TrainPhase::pretrain;
    else if (it->second == "clone") ph = TrainPhase::clone;
    else throw InvalidArgument("config: phase must be pretrain or clone");
    if (phase && *phase != ph)
      throw InvalidArgument(std::string("config: phase is ") + it->second + " but " + phase_name(*phase) +
                            " was requested");
    kv.erase(it);
  }
  TrainConfig c = TrainConfig::defaults(ph);
  for (const auto& [key, v] : kv) {
    if (key == "preset") c.preset = v;
    else if (key == "batch_size") c.batch_size = parse_size(key, v);
    else if (key == "lr") c.lr = parse_double(key, v);
    else if (key == "beta1") c.beta1 = parse_double(key, v);
    else if (key == "beta2") c.beta2 = parse_double(key, v);
    else if (key == "epochs") c.epochs = parse_size(key, v);
    else if (key == "steps") c.steps = parse_size(key, v);
    else if (key == "triplet_count") c.triplet_count = parse_size(key, v);
    else if (key == "adv_start_epoch") c.adv_start_epoch = parse_size(key, v);
    else if (key == "rho") c.rho = parse_double(key, v);
    else if (key == "temperature") c.temperature = parse_double(key, v);
    else if (key == "lambda_adv") c.lambda_adv = parse_double(key, v);
    else if (key == "segment_min_seconds") c.segment_min_seconds = parse_double(key, v);
    else if (key == "segment_max_seconds") c.segment_max_seconds = parse_double(key, v);
    else if (key == "segment_samples") c.segment_samples = parse_size(key, v);
    else if (key == "fft_sizes") {
      c.fft_sizes.clear();
      std::istringstream items(v);
      std::string item;
      while (std::getline(items, item, ',')) c.fft_sizes.push_back(parse_size(key, trim(item)));
    } else if (key == "log_weight") c.log_weight = parse_double(key, v);
    else if (key == "chain_scope") {
      if (v == "segment") c.chain_scope = ChainScope::segment;
      else if (v == "song") c.chain_scope = ChainScope::song;
      else throw InvalidArgument("config: chain_scope must be segment or song");
    } else if (key == "seed") c.seed = parse_size(key, v);
    else if (key == "checkpoint_dir") c.checkpoint_dir = v;
    else if (key == "checkpoint_every") c.checkpoint_every = parse_size(key, v);
    else if (key == "workers") c.workers = parse_size(key, v);
    else if (key == "queue_capacity") c.queue_capacity = parse_size(key, v);
    else if (key == "validation_every") c.validation_every = parse_size(key, v);
    else if (key == "validation_index") c.validation_index = v;
    else if (key == "stoi_downmix") {
      if (v == "per_channel") c.stoi_downmix = StoiDownmix::per_channel;
      else if (v == "mono") c.stoi_downmix = StoiDownmix::mono;
      else throw InvalidArgument("config: stoi_downmix must be per_channel or mono");
    } else {
      throw InvalidArgument("config: unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path, std::optional<TrainPhase> phase) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str(), phase);
}

std::string format_train_config(const TrainConfig& c) {
  std::ostringstream out;
  out.precision(17);
  std::string sizes;
  for (std::size_t i = 0; i < c.fft_sizes.size(); ++i) sizes += (i ? "," : "") + std::to_string(c.fft_sizes[i]);
  out << "phase = " << phase_name(c.phase) << '\n'
      << "preset = " << c.preset << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "lr = " << c.lr << '\n'
      << "beta1 = " << c.beta1 << '\n'
      << "beta2 = " << c.beta2 << '\n'
      << "epochs = " << c.epochs << '\n'
      << "steps = " << c.steps << '\n'
      << "triplet_count = " << c.triplet_count << '\n'
      << "adv_start_epoch = " << c.adv_start_epoch << '\n'
      << "rho = " << c.rho << '\n'
      << "temperature = " << c.temperature << '\n'
      << "lambda_adv = " << c.lambda_adv << '\n'
      << "segment_min_seconds = " << c.segment_min_seconds << '\n'
      << "segment_max_seconds = " << c.segment_max_seconds << '\n'
      << "segment_samples = " << c.segment_samples << '\n'
      << "fft_sizes = " << sizes << '\n'
      << "log_weight = " << c.log_weight << '\n'
      << "chain_scope = " << (c.chain_scope == ChainScope::segment ? "segment" : "song") << '\n'
      << "seed = " << c.seed << '\n'
      << "checkpoint_dir = " << c.checkpoint_dir << '\n'
      << "checkpoint_every = " << c.checkpoint_every << '\n'
      << "workers = " << c.workers << '\n'
      << "queue_capacity = " << c.queue_capacity << '\n'
      << "validation_every = " << c.validation_every << '\n'
      << "validation_index = " << c.validation_index << '\n'
      << "stoi_downmix = " << (c.stoi_downmix == StoiDownmix::mono ? "mono" : "per_channel") << '\n';
  return out.str();
}

nlohmann::json TrainConfig::hashed_fields() const {
  return {{"phase", phase_name(phase)},
          {"preset", preset},
          {"batch_size", effective_batch_size()},
          {"lr", lr},
          {"beta1", beta1},
          {"beta2", beta2},
          {"triplet_count", triplet_count},
          {"adv_start_epoch", adv_start_epoch},
          {"rho", rho},
          {"temperature", temperature},
          {"lambda_adv", lambda_adv},
          {"segment_min_seconds", segment_min_seconds},
          {"segment_max_seconds", segment_max_seconds},
          {"segment_samples", segment_samples},
          {"fft_sizes", fft_sizes},
          {"log_weight", log_weight},
          {"chain_scope", chain_scope == ChainScope::segment ? "segment" : "song"},
          {"seed", seed}};
}

// ---- triplet sources ------------------------------------------------------

namespace {

class VirtualTriplets final : public TripletSource {
 public:
  VirtualTriplets(const Manifest& manifest, std::size_t count, std::uint64_t seed, const TripletOptions& options)
      : library_(manifest), count_(count), seed_(seed) {
    if (manifest.empty()) throw InvalidArgument("empty manifest: no songs to fabricate triplets from");
    options_.triplet = options;
  }
  std::size_t size() const override { return count_; }
  TripletExample get(std::size_t index) override { return fabricate_one(library_, index, seed_, options_); }

 private:
  SongLibrary library_;
  std::size_t count_;
  std::uint64_t seed_;
  FabricateOptions options_;
};

class IndexedTriplets final : public TripletSource {
 public:
  explicit IndexedTriplets(const std::filesystem::path& index_path)
      : records_(read_index(index_path)), base_(index_path.parent_path()) {
    if (records_.empty()) throw InvalidArgument("empty triplet index " + index_path.string());
  }
  std::size_t size() const override { return records_.size(); }
  TripletExample get(std::size_t index) override {
    const auto& r = records_.at(index);
    return TripletExample{load_wav(base_ / r.a1_path), load_wav(base_ / r.a2_path), load_wav(base_ / r.b2_path),
                          r.m1,
                          r.m2,
                          r.song_id,
                          {r.offset_a, r.offset_b}};
  }

 private:
  std::vector<TripletRecord> records_;
  std::filesystem::path base_;
};

// Produces items for indices [first, end) on worker threads and hands them
// out strictly in index order; at most `capacity` items wait ahead of the
// consumer.
template <class T>
class OrderedPrefetcher {
 public:
  OrderedPrefetcher(std::uint64_t first, std::uint64_t end, std::size_t workers, std::size_t capacity,
                    std::function<T(std::uint64_t)> make)
      : claim_(first), deliver_(first), end_(end), capacity_(capacity), make_(std::move(make)) {
    for (std::size_t i = 0; i < workers; ++i) threads_.emplace_back([this] { run(); });
  }
  ~OrderedPrefetcher() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  T next() {
    if (threads_.empty()) return make_(deliver_++);
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return ready_.contains(deliver_); });
    auto node = ready_.extract(deliver_);
    ++deliver_;
    lock.unlock();
    cv_.notify_all();
    if (auto* e = std::get_if<std::exception_ptr>(&node.mapped())) std::rethrow_exception(*e);
    return std::move(std::get<T>(node.mapped()));
  }

 private:
  void run() {
    for (;;) {
      std::uint64_t index;
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return stop_ || claim_ >= end_ || claim_ < deliver_ + capacity_; });
        if (stop_ || claim_ >= end_) return;
        index = claim_++;
      }
      std::variant<T, std::exception_ptr> result;
      try {
        result = make_(index);
      } catch (...) {
        result = std::current_exception();
      }
      {
        std::lock_guard lock(mutex_);
        ready_.emplace(index, std::move(result));
      }
      cv_.notify_all();
    }
  }

  std::uint64_t claim_;
  std::uint64_t deliver_;
  std::uint64_t end_;
  std::size_t capacity_;
  std::function<T(std::uint64_t)> make_;
  std::mutex mutex_;
  std::condition_variable cv_;
  bool stop_ = false;
  std::map<std::uint64_t, std::variant<T, std::exception_ptr>> ready_;
  std::vector<std::thread> threads_;
};

constexpr std::uint64_t kModelStream = 0x6d6f64656c;  // streams for init and
constexpr std::uint64_t kStepStream = 0x73746570;     // per-step sampling

class JsonLog {
 public:
  JsonLog(const std::filesystem::path& path, bool append)
      : out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw IoError("cannot write training log " + path.string());
  }
  void write(const nlohmann::json& record) {
    out_ << record.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

void prepare_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::vector<double> history_from(const Checkpoint& ckpt, const char* key) {
  std::vector<double> h;
  if (ckpt.extra.contains(key)) h = ckpt.extra.at(key).get<std::vector<double>>();
  return h;
}

}  // namespace

std::unique_ptr<TripletSource> make_virtual_triplets(const Manifest& manifest, std::size_t count, std::uint64_t seed,
                                                     const TripletOptions& options) {
  return std::make_unique<VirtualTriplets>(manifest, count, seed, options);
}

std::unique_ptr<TripletSource> make_indexed_triplets(const std::filesystem::path& index_path) {
  return std::make_unique<IndexedTriplets>(index_path);
}

// ---- pretraining ------------------------------------------------------------

namespace {

struct PairBatch {
  std::vector<nn::Tensor> views;  // B first views, then B second views
};

}  // namespace

TrainResult pretrain_encoder(const TrainConfig& config, const Manifest& manifest, const std::filesystem::path& out_dir,
                             const std::optional<std::filesystem::path>& resume) {
  config.validate();
  if (config.phase != TrainPhase::pretrain) throw InvalidArgument("pretrain_encoder needs phase = pretrain");
  if (manifest.size() < 2) throw InvalidArgument("contrastive pretraining needs at least 2 songs");
  const PairOptions pair_options{config.segment_min_seconds, config.segment_max_seconds};
  for (const auto& song : manifest)
    if (song.duration < config.segment_max_seconds)
      throw InvalidArgument("song too short: '" + song.song_id + "' is shorter than segment_max_seconds");

  const EncoderConfig enc_config = EncoderConfig::preset(config.preset);
  Encoder encoder(enc_config, Rng::mix(config.seed, kModelStream));
  nn::Adam adam(encoder.params().parameter_tensors(), {config.lr, config.beta1, config.beta2, 1e-8});
  const nlohmann::json ckpt_config = {{"encoder", enc_config}, {"train", config.hashed_fields()}};

  std::uint64_t start = 0;
  std::vector<double> history;
  if (resume) {
    const Checkpoint ckpt = load_checkpoint(*resume, kEncoderKind, config_hash(ckpt_config));
    restore_params(encoder.params(), "encoder.", ckpt);
    restore_adam(adam, "adam.", ckpt);
    start = ckpt.step;
    history = history_from(ckpt, "loss_history");
  }

  prepare_dir(out_dir);
  TrainResult result;
  result.checkpoint = out_dir / kEncoderCheckpointName;
  result.log = out_dir / kTrainLogName;
  JsonLog log(result.log, resume.has_value());

  auto save = [&](std::uint64_t step) {
    Checkpoint ckpt;
    ckpt.kind = kEncoderKind;
    ckpt.config = ckpt_config;
    ckpt.step = step;
    ckpt.seed = config.seed;
    ckpt.extra["loss_history"] = history;
    store_params(encoder.params(), "encoder.", ckpt);
    store_adam(adam, "adam.", ckpt);
    save_checkpoint(ckpt, result.checkpoint);
  };

  SongLibrary library(manifest);
  const std::size_t B = config.effective_batch_size();
  const std::uint64_t stream = Rng::mix(config.seed, kStepStream);
  auto make_batch = [&](std::uint64_t step) {
    Rng rng = Rng::derive(stream, step);
    // distinct songs while the corpus allows it
    std::vector<std::size_t> order(library.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<std::size_t> songs;
    while (songs.size() < B) {
      for (std::size_t i = 0; i < order.size(); ++i)
        std::swap(order[i], order[i + rng.uniform_int(0, order.size() - 1 - i)]);
      for (std::size_t i = 0; i < order.size() && songs.size() < B; ++i) songs.push_back(order[i]);
    }
    PairBatch batch;
    std::vector<nn::Tensor> second;
    for (auto s : songs) {
      auto pair = make_contrastive_pair(*library.audio(s), rng, pair_options);
      batch.views.push_back(waveform_tensor(pair.first));
      second.push_back(waveform_tensor(pair.second));
    }
    batch.views.insert(batch.views.end(), second.begin(), second.end());
    return batch;
  };

  const std::uint64_t total = config.total_steps();
  const std::size_t spe = config.steps_per_epoch();
  {
    OrderedPrefetcher<PairBatch> prefetch(start, std::max<std::uint64_t>(start, total), config.workers,
                                          config.queue_capacity, make_batch);
    for (std::uint64_t step = start; step < total; ++step) {
      PairBatch batch = prefetch.next();
      nn::Tensor emb = encoder.forward(batch.views, true);
      nn::Tensor loss = nt_xent_loss(encoder.project(emb), config.temperature);
      adam.zero_grad();
      nn::backward(loss);
      adam.step();

      const double value = loss.item();
      history.push_back(value);
      result.losses.push_back(value);
      log.write({{"step", step + 1}, {"phase", "pretrain"}, {"epoch", step / spe}, {"loss", value}});
      if (config.checkpoint_every != 0 && (step + 1) % config.checkpoint_every == 0 && step + 1 != total)
        save(step + 1);
    }
  }
  result.final_step = std::max<std::uint64_t>(start, total);
  save(result.final_step);
  return result;
}

// ---- cloner training --------------------------------------------------------

namespace {

struct TripletBatch {
  nn::Tensor input;      // A1 [B, 2, T]
  nn::Tensor target;     // A2
  nn::Tensor condition;  // g_enc(B2) [B, D]
};

}  // namespace

TrainResult train_cloner(const TrainConfig& config, TripletSource& triplets, const std::filesystem::path& encoder_ckpt,
                         const std::filesystem::path& out_dir, const std::optional<std::filesystem::path>& resume) {
  config.validate();
  if (config.phase != TrainPhase::clone) throw InvalidArgument("train_cloner needs phase = clone");
  if (triplets.size() == 0) throw InvalidArgument("empty manifest: no training triplets");

  const std::unique_ptr<Encoder> encoder = load_encoder(encoder_ckpt);
  const std::uint64_t encoder_hash = encoder->params().hash();

  ClonerConfig cl_config = ClonerConfig::preset(config.preset);
  DiscriminatorConfig d_config = DiscriminatorConfig::preset(config.preset);
  const std::size_t cond_dim = encoder->config().embedding_dim;
  if (cl_config.condition_dim != cond_dim || d_config.condition_dim != cond_dim)
    throw InvalidArgument("encoder/condition dim mismatch: the " + config.preset + " preset expects " +
                          std::to_string(cl_config.condition_dim) + "-d conditions, encoder produces " +
                          std::to_string(cond_dim));
  if (config.segment_samples % cl_config.length_multiple() != 0)
    throw InvalidArgument("segment_samples must be a multiple of " + std::to_string(cl_config.length_multiple()));
  if (config.segment_samples < config.fft_sizes.front() || config.segment_samples < d_config.fft_size)
    throw InvalidArgument("segment_samples is shorter than the largest spectral window");

  const std::uint64_t model_seed = Rng::mix(config.seed, kModelStream);
  Cloner cloner(cl_config, model_seed);
  Discriminator disc(d_config, Rng::mix(model_seed, 1));
  const nn::AdamConfig adam_config{config.lr, config.beta1, config.beta2, 1e-8};
  nn::Adam g_opt(cloner.params().parameter_tensors(), adam_config);
  nn::Adam d_opt(disc.params().parameter_tensors(), adam_config);

  const nlohmann::json ckpt_config = {{"cloner", cl_config},
                                      {"discriminator", d_config},
                                      {"encoder", encoder->config()},
                                      {"segment_samples", config.segment_samples},
                                      {"train", config.hashed_fields()}};

  std::uint64_t start = 0;
  std::vector<double> history;
  if (resume) {
    const Checkpoint ckpt = load_checkpoint(*resume, kClonerKind, config_hash(ckpt_config));
    if (ckpt.extra.value("encoder_hash", std::string()) != std::to_string(encoder_hash))
      throw InvalidArgument("resume checkpoint was trained against a different encoder");
    restore_params(cloner.params(), "cloner.", ckpt);
    restore_params(disc.params(), "discriminator.", ckpt);
    restore_adam(g_opt, "adam_g.", ckpt);
    restore_adam(d_opt, "adam_d.", ckpt);
    start = ckpt.step;
    history = history_from(ckpt, "loss_history");
  }

  prepare_dir(out_dir);
  TrainResult result;
  result.checkpoint = out_dir / kClonerCheckpointName;
  result.log = out_dir / kTrainLogName;
  JsonLog log(result.log, resume.has_value());

  auto save = [&](std::uint64_t step) {
    Checkpoint ckpt;
    ckpt.kind = kClonerKind;
    ckpt.config = ckpt_config;
    ckpt.step = step;
    ckpt.seed = config.seed;
    ckpt.extra["loss_history"] = history;
    ckpt.extra["encoder_hash"] = std::to_string(encoder_hash);
    store_params(cloner.params(), "cloner.", ckpt);
    store_params(disc.params(), "discriminator.", ckpt);
    store_adam(g_opt, "adam_g.", ckpt);
    store_adam(d_opt, "adam_d.", ckpt);
    save_checkpoint(ckpt, result.checkpoint);
  };

  const std::size_t B = config.effective_batch_size(), T = config.segment_samples;
  const std::size_t count = triplets.size();
  auto make_batch = [&](std::uint64_t step) {
    std::vector<double> in, tgt, cond;
    in.reserve(B * 2 * T);
    tgt.reserve(B * 2 * T);
    for (std::size_t b = 0; b < B; ++b) {
      const TripletExample t = triplets.get((step * B + b) % count);
      if (t.input_a1.size() != T || t.target_a2.size() != T)
        throw InvalidArgument("triplet length " + std::to_string(t.input_a1.size()) +
                              " differs from segment_samples " + std::to_string(T));
      const auto a1 = t.input_a1.interleaved_planar();
      const auto a2 = t.target_a2.interleaved_planar();
      in.insert(in.end(), a1.begin(), a1.end());
      tgt.insert(tgt.end(), a2.begin(), a2.end());
      const auto c = encoder->encode(t.reference_b2);
      cond.insert(cond.end(), c.begin(), c.end());
    }
    return TripletBatch{nn::Tensor({B, 2, T}, std::move(in)), nn::Tensor({B, 2, T}, std::move(tgt)),
                        nn::Tensor({B, cond_dim}, std::move(cond))};
  };

  const RmsLossSpec rms_spec{config.rho};
  const MssSpec mss_spec{config.fft_sizes, 0.75, 1e-7, config.log_weight};
  const std::uint64_t total = config.total_steps();
  const std::size_t spe = config.steps_per_epoch();
  {
    OrderedPrefetcher<TripletBatch> prefetch(start, std::max<std::uint64_t>(start, total), config.workers,
                                             config.queue_capacity, make_batch);
    for (std::uint64_t step = start; step < total; ++step) {
      TripletBatch batch = prefetch.next();
      const std::uint64_t epoch = step / spe;
      const bool adversarial = epoch >= config.adv_start_epoch;

      nn::Tensor pred = cloner.forward(batch.input, batch.condition);
      ClonerLossTerms terms;
      nn::Tensor loss = cloner_loss(batch.target, pred, rms_spec, mss_spec, &terms);
      double loss_d = 0.0, loss_g = 0.0;
      if (adversarial) {
        nn::Tensor real = disc.forward(batch.target, batch.condition, true);
        nn::Tensor fake = disc.forward(pred.detach(), batch.condition, true);
        nn::Tensor ld = hinge_d_loss(real, fake);
        d_opt.zero_grad();
        nn::backward(ld);
        d_opt.step();
        loss_d = ld.item();

        nn::Tensor lg = hinge_g_loss(disc.forward(pred, batch.condition, true));
        loss_g = lg.item();
        loss = nn::add(loss, nn::scale(lg, config.lambda_adv));
      }
      g_opt.zero_grad();
      nn::backward(loss);
      g_opt.step();
      disc.params().zero_grad();

      const double psi = terms.total();
      history.push_back(psi);
      result.losses.push_back(psi);
      log.write({{"step", step + 1},
                 {"phase", "clone"},
                 {"epoch", epoch},
                 {"loss", loss.item()},
                 {"loss_psi", psi},
                 {"loss_rms", terms.rms},
                 {"loss_mss", terms.mss_left + terms.mss_right + terms.mss_mid + terms.mss_side},
                 {"loss_d", loss_d},
                 {"loss_g", loss_g}});

      const bool epoch_end = (step + 1) % spe == 0;
      if (config.checkpoint_every != 0 && (step + 1) % config.checkpoint_every == 0 && step + 1 != total)
        save(step + 1);
      if (config.validation_every != 0 && !config.validation_index.empty() && epoch_end &&
          (epoch + 1) % config.validation_every == 0) {
        save(step + 1);
        EvaluateOptions eval;
        eval.encoder_checkpoint = encoder_ckpt;
        eval.cloner_checkpoint = result.checkpoint;
        eval.dataset_seed = config.seed;
        eval.downmix = config.stoi_downmix;
        eval.generated_at = "training";
        const MetricReport report = evaluate_pairs(config.validation_index, eval);
        nlohmann::json rec = {{"step", step + 1}, {"phase", "validation"}, {"epoch", epoch}};
        rec["aggregate"] = to_json(report)["aggregate"];
        log.write(rec);
      }
    }
  }
  if (encoder->params().hash() != encoder_hash) throw Error("internal error: frozen encoder was modified");
  result.final_step = std::max<std::uint64_t>(start, total);
  save(result.final_step);
  return result;
}

}  // namespace remaster
