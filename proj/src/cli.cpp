#include "remaster/cli.hpp"

#include <cstdlib>
#include <optional>

#include <CLI11.hpp>

#include "remaster/dataset.hpp"
#include "remaster/error.hpp"
#include "remaster/fx.hpp"
#include "remaster/inference.hpp"
#include "remaster/metrics.hpp"
#include "remaster/trainer.hpp"
#include "remaster/wav.hpp"

namespace remaster {
namespace {

namespace fs = std::filesystem;

struct FabricateArgs {
  std::string input_dir, out, scope = "segment", sampling = "round_robin";
  std::size_t count = 0, segment_len = 131072, threads = 0;
  std::uint64_t seed = 0;
};

struct FxArgs {
  std::string input, params, out, bit_depth = "32f";
  std::uint64_t seed = 0;
};

struct TrainArgs {
  std::string config, data, out, resume, encoder;
  std::optional<std::uint64_t> seed;
};

struct RemasterArgs {
  std::string input, reference, encoder, cloner, out, bit_depth = "32f";
};

struct EvaluateArgs {
  std::string index, encoder, cloner, out, downmix = "per_channel";
  std::uint64_t seed = 0;
};

TrainConfig resolve_config(const TrainArgs& a, TrainPhase phase) {
  std::string path = a.config;
  if (path.empty())
    if (const char* env = std::getenv("REMASTERKIT_CONFIG")) path = env;
  TrainConfig c = path.empty() ? TrainConfig::defaults(phase) : load_train_config(path, phase);
  if (a.seed) c.seed = *a.seed;
  c.validate();
  return c;
}

Manifest corpus_from(const fs::path& data, double min_seconds) {
  if (fs::is_regular_file(data)) return load_manifest(data);
  return scan_corpus(data, min_seconds);
}

void cmd_fabricate(const FabricateArgs& a, std::ostream& out) {
  FabricateOptions options;
  options.triplet.segment_len = a.segment_len;
  options.triplet.scope = a.scope == "song" ? ChainScope::song : ChainScope::segment;
  options.sampling = a.sampling == "uniform" ? SongSampling::uniform : SongSampling::round_robin;
  options.threads = a.threads;
  const Manifest manifest = scan_corpus(a.input_dir, 2.0 * static_cast<double>(a.segment_len) / kCanonicalSampleRate);
  const auto records = fabricate(manifest, a.count, a.seed, a.out, options);
  out << "wrote " << records.size() << " triplets from " << manifest.size() << " songs to "
      << (fs::path(a.out) / kIndexFileName).string() << '\n';
}

void cmd_fx_apply(const FxArgs& a, std::ostream& out) {
  const FxParams params = load_fx_params(a.params);
  const StereoWaveform in = load_wav(a.input);
  save_wav(apply_chain(in, params), a.out, parse_bit_depth(a.bit_depth));
  out << "wrote " << a.out << '\n';
}

void cmd_fx_sample(const FxArgs& a, std::ostream& out) {
  save_fx_params(sample_fx_params(a.seed, FxRanges{}), a.out);
  out << "wrote " << a.out << '\n';
}

void cmd_pretrain(const TrainArgs& a, std::ostream& out) {
  const TrainConfig config = resolve_config(a, TrainPhase::pretrain);
  const Manifest manifest = corpus_from(a.data, config.segment_max_seconds);
  const auto result = pretrain_encoder(config, manifest, a.out,
                                       a.resume.empty() ? std::nullopt : std::optional<fs::path>(a.resume));
  out << "pretrained encoder to step " << result.final_step << ": " << result.checkpoint.string() << '\n';
}

void cmd_train_cloner(const TrainArgs& a, std::ostream& out) {
  const TrainConfig config = resolve_config(a, TrainPhase::clone);
  std::unique_ptr<TripletSource> source;
  const fs::path data(a.data);
  if (fs::is_directory(data) && fs::exists(data / kIndexFileName)) {
    source = make_indexed_triplets(data / kIndexFileName);
  } else if (data.filename() == kIndexFileName) {
    source = make_indexed_triplets(data);
  } else {
    TripletOptions options;
    options.segment_len = config.segment_samples;
    options.scope = config.chain_scope;
    const Manifest manifest =
        corpus_from(data, 2.0 * static_cast<double>(config.segment_samples) / kCanonicalSampleRate);
    source = make_virtual_triplets(manifest, config.triplet_count, config.seed, options);
  }
  const auto result = train_cloner(config, *source, a.encoder, a.out,
                                   a.resume.empty() ? std::nullopt : std::optional<fs::path>(a.resume));
  out << "trained cloner to step " << result.final_step << ": " << result.checkpoint.string() << '\n';
}

void cmd_remaster(const RemasterArgs& a, std::ostream& out) {
  const RemasterModels models = load_models(a.encoder, a.cloner);
  const StereoWaveform input = load_wav(a.input);
  const StereoWaveform reference = load_wav(a.reference);
  save_wav(remaster(models, input, reference), a.out, parse_bit_depth(a.bit_depth));
  out << "wrote " << a.out << '\n';
}

void cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  EvaluateOptions options;
  options.encoder_checkpoint = a.encoder;
  options.cloner_checkpoint = a.cloner;
  options.dataset_seed = a.seed;
  options.downmix = a.downmix == "mono" ? StoiDownmix::mono : StoiDownmix::per_channel;
  const MetricReport report = evaluate_pairs(a.index, options);
  write_report(report, a.out);
  out << "scored " << report.records.size() << " pairs: " << a.out << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-supervised music remastering toolkit", "remasterkit"};
  app.require_subcommand(1);

  FabricateArgs fab;
  auto* fabricate_cmd = app.add_subcommand("fabricate", "Write (A1, A2, B2) triplets and index.jsonl from a corpus");
  fabricate_cmd->add_option("--input-dir", fab.input_dir, "Corpus directory of 44.1 kHz stereo WAVs")->required();
  fabricate_cmd->add_option("--out", fab.out, "Output directory")->required();
  fabricate_cmd->add_option("--count", fab.count, "Number of triplets")->required();
  fabricate_cmd->add_option("--seed", fab.seed, "Random seed");
  fabricate_cmd->add_option("--segment-len", fab.segment_len, "Segment length in samples");
  fabricate_cmd->add_option("--scope", fab.scope, "Chain scope")->check(CLI::IsMember({"segment", "song"}));
  fabricate_cmd->add_option("--sampling", fab.sampling, "Song sampling")
      ->check(CLI::IsMember({"round_robin", "uniform"}));
  fabricate_cmd->add_option("--threads", fab.threads, "Worker threads (0: all cores)");

  FxArgs fx;
  auto* fx_cmd = app.add_subcommand("fx", "Mastering chain utilities");
  fx_cmd->require_subcommand(1);
  auto* fx_apply = fx_cmd->add_subcommand("apply", "Apply an FxParams JSON file to a WAV");
  fx_apply->add_option("--input", fx.input, "Input WAV")->required();
  fx_apply->add_option("--params", fx.params, "FxParams JSON")->required();
  fx_apply->add_option("--out", fx.out, "Output WAV")->required();
  fx_apply->add_option("--bit-depth", fx.bit_depth, "16, 24 or 32f")->check(CLI::IsMember({"16", "24", "32f"}));
  auto* fx_sample = fx_cmd->add_subcommand("sample", "Draw random FxParams");
  fx_sample->add_option("--seed", fx.seed, "Random seed");
  fx_sample->add_option("--out", fx.out, "Output JSON")->required();

  TrainArgs pre;
  auto* pretrain_cmd = app.add_subcommand("pretrain-encoder", "Contrastive pretraining of the effects encoder");
  pretrain_cmd->add_option("--config", pre.config, "key = value config file (falls back to $REMASTERKIT_CONFIG)");
  pretrain_cmd->add_option("--data", pre.data, "Corpus directory or manifest JSON")->required();
  pretrain_cmd->add_option("--out", pre.out, "Output directory")->required();
  pretrain_cmd->add_option("--resume", pre.resume, "Checkpoint to continue from");
  pretrain_cmd->add_option("--seed", pre.seed, "Overrides the config seed");

  TrainArgs clo;
  auto* clone_cmd = app.add_subcommand("train-cloner", "Train the mastering cloner against a frozen encoder");
  clone_cmd->add_option("--config", clo.config, "key = value config file (falls back to $REMASTERKIT_CONFIG)");
  clone_cmd->add_option("--data", clo.data, "Fabricated triplet directory, corpus directory or manifest JSON")
      ->required();
  clone_cmd->add_option("--encoder", clo.encoder, "Pretrained encoder checkpoint")->required();
  clone_cmd->add_option("--out", clo.out, "Output directory")->required();
  clone_cmd->add_option("--resume", clo.resume, "Checkpoint to continue from");
  clone_cmd->add_option("--seed", clo.seed, "Overrides the config seed");

  RemasterArgs rem;
  auto* remaster_cmd = app.add_subcommand("remaster", "Remaster a track in the style of a reference");
  remaster_cmd->add_option("--input", rem.input, "Input WAV")->required();
  remaster_cmd->add_option("--reference", rem.reference, "Reference WAV")->required();
  remaster_cmd->add_option("--encoder", rem.encoder, "Encoder checkpoint")->required();
  remaster_cmd->add_option("--cloner", rem.cloner, "Cloner checkpoint")->required();
  remaster_cmd->add_option("--out", rem.out, "Output WAV")->required();
  remaster_cmd->add_option("--bit-depth", rem.bit_depth, "16, 24 or 32f")->check(CLI::IsMember({"16", "24", "32f"}));

  EvaluateArgs ev;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score remastered outputs against targets");
  evaluate_cmd->add_option("--index", ev.index, "Evaluation index.jsonl")->required();
  evaluate_cmd->add_option("--encoder", ev.encoder, "Encoder checkpoint");
  evaluate_cmd->add_option("--cloner", ev.cloner, "Cloner checkpoint");
  evaluate_cmd->add_option("--out", ev.out, "Report JSON")->required();
  evaluate_cmd->add_option("--seed", ev.seed, "Dataset seed recorded in the report");
  evaluate_cmd->add_option("--stoi-downmix", ev.downmix, "per_channel or mono")
      ->check(CLI::IsMember({"per_channel", "mono"}));

  std::vector<std::string> argv_store{"remasterkit"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::Success& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (fabricate_cmd->parsed()) cmd_fabricate(fab, out);
    else if (fx_apply->parsed()) cmd_fx_apply(fx, out);
    else if (fx_sample->parsed()) cmd_fx_sample(fx, out);
    else if (pretrain_cmd->parsed()) cmd_pretrain(pre, out);
    else if (clone_cmd->parsed()) cmd_train_cloner(clo, out);
    else if (remaster_cmd->parsed()) cmd_remaster(rem, out);
    else if (evaluate_cmd->parsed()) cmd_evaluate(ev, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace remaster
