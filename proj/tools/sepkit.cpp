// tools/sepkit.cpp

// Copyright 2026  sepkit authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// sepkit: command-line front end for the dysfluency detection pipeline.
//
//   sepkit extract    --audio-dir DIR --out DIR
//   sepkit featurize  --manifest CSV [--features mfb,f0,...] [--external-dir DIR] --out DIR
//   sepkit agreement  --annotations CSV [--format native|sep28k] [--out DIR]
//   sepkit split      --annotations CSV [--n-train N --n-val N --n-test N] [--by-speaker] --out DIR
//   sepkit train      --features-dir DIR --annotations CSV --splits CSV --out DIR
//   sepkit evaluate   (--checkpoint FILE --features-dir DIR | --scores CSV) --annotations CSV --out DIR
//   sepkit ablate     --features-dir DIR --annotations CSV --splits CSV --sizes 125,250 --out DIR
//   sepkit synth      --n-clips N --out DIR
//
// Every subcommand accepts --seed and --config FILE (key=value lines naming
// long options without the dashes; options given on the command line win).
// Exit status: 0 success, 1 runtime failure, 2 usage or input error.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "sepkit/annotations.hpp"
#include "sepkit/audio_ingest.hpp"
#include "sepkit/dataset.hpp"
#include "sepkit/feature_io.hpp"
#include "sepkit/features.hpp"
#include "sepkit/metrics.hpp"
#include "sepkit/synthetic.hpp"
#include "sepkit/training.hpp"
#include "sepkit/util.hpp"
#include "sepkit/wav.hpp"

namespace fs = std::filesystem;
using namespace sepkit;

namespace {

std::vector<std::string> SplitList(const std::string &s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<StreamName> ParseStreams(const std::string &s) {
  std::vector<StreamName> out;
  for (const auto &name : SplitList(s)) out.push_back(ParseStreamName(name));
  if (out.empty()) throw InputError("no feature streams selected");
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end()) throw InputError("duplicate feature stream");
  return out;
}

// 64-bit FNV-1a; stable across platforms, unlike std::hash.
uint64_t StableHash(const std::string &s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void EnsureDir(const std::string &dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory " + dir + ": " + ec.message());
}

void RequireFile(const std::string &path, const std::string &what) {
  if (!fs::is_regular_file(path)) throw InputError(what + " not found: " + path);
}

// Records the effective configuration next to a subcommand's outputs.
void StampRun(const std::string &out_dir, const CLI::App &sub) {
  std::string text = "command=" + sub.get_name() + "\n";
  std::map<std::string, std::string> values;
  for (const CLI::Option *opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    if (opt->count() == 0 && opt->get_default_str().empty()) continue;
    std::string v;
    if (opt->count() > 0) {
      for (const auto &r : opt->results()) v += (v.empty() ? "" : ",") + r;
    } else {
      v = opt->get_default_str();
    }
    values[name] = v;
  }
  for (const auto &[k, v] : values) text += k + "=" + v + "\n";
  WriteTextFile((fs::path(out_dir) / "run_config.txt").string(), text);
}

// Appends options from --config that were not given explicitly.
std::vector<std::string> MergeConfig(std::vector<std::string> args) {
  std::string config_path;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;
  const auto kv = ParseKeyValues(ReadTextFile(config_path));
  for (const auto &[key, value] : kv) {
    if (key == "config") continue;
    const std::string flag = "--" + key;
    const bool given = std::any_of(args.begin(), args.end(), [&](const std::string &a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (given) continue;
    if (value == "true") {
      args.push_back(flag);
    } else if (value != "false") {
      args.push_back(flag);
      args.push_back(value);
    }
  }
  return args;
}

// ---------------------------------------------------------------------------

struct Common {
  uint64_t seed = 0;
  std::string config;
  std::string out;
};

void AddCommon(CLI::App *sub, Common &c, bool out_required = true) {
  sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  sub->add_option("--config", c.config, "key=value configuration file; command-line options win");
  auto *o = sub->add_option("--out", c.out, "Output directory");
  if (out_required) o->required();
}

// ---------------------------------------------------------------------------
// extract

struct ExtractArgs {
  Common common;
  std::string audio_dir;
  ClipConfig clip;
  VadConfig vad;
};

int RunExtract(const ExtractArgs &a, const CLI::App &sub) {
  if (!fs::is_directory(a.audio_dir)) throw InputError("audio directory not found: " + a.audio_dir);
  std::vector<fs::path> files;
  for (const auto &e : fs::directory_iterator(a.audio_dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".wav") files.push_back(e.path());
  }
  if (files.empty()) throw InputError("no WAV files in " + a.audio_dir);
  std::sort(files.begin(), files.end());

  EnsureDir(a.common.out);
  EnsureDir((fs::path(a.common.out) / "clips").string());
  std::vector<ManifestRow> rows;
  std::set<std::string> sources;
  size_t failures = 0;
  for (const auto &f : files) {
    std::string source = f.stem().string();
    for (char &c : source)
      if (c == ',' || c == ' ' || c == '\t' || c == '"') c = '_';
    if (!sources.insert(source).second) throw InputError("two audio files map to source id " + source);
    AudioBuffer audio;
    try {
      audio = LoadWav(f.string());
    } catch (const std::exception &e) {
      std::cerr << f.string() << ": unreadable: " << e.what() << "\n";
      ++failures;
      continue;
    }
    const auto segments = DetectSegments(audio, a.vad);
    const auto result = ExtractClips(audio, segments, a.clip, source, a.common.seed ^ StableHash(source));
    if (!result.diagnostic.empty()) std::cerr << f.string() << ": " << result.diagnostic << "\n";
    for (const auto &clip : result.clips) {
      const std::string rel = "clips/" + clip.key() + ".wav";
      WriteWav16((fs::path(a.common.out) / rel).string(), clip.buffer.samples, clip.buffer.sample_rate);
      rows.push_back({clip.source_id, clip.clip_id, clip.start_sample, clip.stop_sample(), rel});
    }
    std::cout << f.filename().string() << ": " << result.clips.size() << " clips\n";
  }
  if (failures == files.size()) throw Error("all " + std::to_string(failures) + " input files failed");
  WriteTextFile((fs::path(a.common.out) / "manifest.csv").string(), FormatManifest(rows));
  StampRun(a.common.out, sub);
  std::cout << "wrote " << rows.size() << " clips from " << files.size() - failures << " files\n";
  return 0;
}

// ---------------------------------------------------------------------------
// featurize

struct FeaturizeArgs {
  Common common;
  std::string manifest;
  std::string features = "mfb,f0";
  std::string external_dir;
  int jobs = 1;
};

int RunFeaturize(const FeaturizeArgs &a, const CLI::App &sub) {
  RequireFile(a.manifest, "manifest");
  const auto rows = ReadManifest(a.manifest);
  const auto streams = ParseStreams(a.features);
  const fs::path base = fs::path(a.manifest).parent_path();
  // Validate every referenced input before doing any work.
  for (const auto &r : rows) {
    const fs::path wav = base / r.path;
    if (!fs::is_regular_file(wav)) throw InputError("missing clip file " + wav.string());
    for (StreamName s : streams) {
      if (s == StreamName::kMfb || s == StreamName::kF0) continue;
      const fs::path ext = fs::path(a.external_dir) / FeatureFileName(r.key(), s);
      if (a.external_dir.empty() || !fs::is_regular_file(ext))
        throw InputError("external stream missing: " + StreamLabel(s) + " for clip " + r.key() +
                         (a.external_dir.empty() ? " (no --external-dir given)" : " (" + ext.string() + ")"));
    }
  }
  EnsureDir(a.common.out);

  auto work = [&](size_t i) {
    const auto &r = rows[i];
    AudioClip clip;
    clip.buffer = LoadWav((base / r.path).string());
    clip.source_id = r.source_id;
    clip.clip_id = r.clip_id;
    clip.start_sample = r.start_sample;
    for (StreamName s : streams) {
      FeatureStream f;
      if (s == StreamName::kMfb) f = MelFilterbank(clip);
      else if (s == StreamName::kF0) f = PitchFeatures(clip);
      else f = LoadExternalStream((fs::path(a.external_dir) / FeatureFileName(r.key(), s)).string(), s);
      WriteFeatureFile((fs::path(a.common.out) / FeatureFileName(r.key(), s)).string(), f);
    }
  };
  // Clips are independent and each writes its own files, so the output does
  // not depend on the number of workers.
  const size_t jobs = static_cast<size_t>(std::max(1, a.jobs));
  std::vector<std::string> errors(jobs);
  std::vector<std::thread> pool;
  for (size_t j = 0; j < jobs; ++j)
    pool.emplace_back([&, j] {
      try {
        for (size_t i = j; i < rows.size(); i += jobs) work(i);
      } catch (const std::exception &e) {
        errors[j] = e.what();
      }
    });
  for (auto &t : pool) t.join();
  for (const auto &e : errors)
    if (!e.empty()) throw Error(e);
  StampRun(a.common.out, sub);
  std::cout << "wrote " << rows.size() * streams.size() << " feature files for " << rows.size() << " clips\n";
  return 0;
}

// ---------------------------------------------------------------------------
// agreement

struct AgreementArgs {
  Common common;
  std::string annotations;
  std::string format = "native";
  int n_annotators = 3;
};

std::vector<ClipAnnotation> ReadAnyAnnotations(const std::string &path, const std::string &format, int n) {
  RequireFile(path, "annotation file");
  if (format == "native") return ParseAnnotations(path, n);
  if (format == "sep28k") return ConvertSep28kLabels(path);
  throw InputError("unknown annotation format '" + format + "' (expected native or sep28k)");
}

int RunAgreement(const AgreementArgs &a, const CLI::App &sub) {
  const auto anns = ReadAnyAnnotations(a.annotations, a.format, a.n_annotators);
  if (anns.empty()) throw InputError("no annotated clips in " + a.annotations);
  const auto dist = LabelDistribution(anns);
  std::string csv = "label,fleiss_kappa,percent\n";
  std::cout << "clips: " << anns.size() << "\n";
  std::cout << "label              kappa   percent\n";
  for (size_t l = 0; l < kNumLabels; ++l) {
    const double k = anns.size() >= 2 ? FleissKappa(anns, static_cast<Label>(l)) : std::nan("");
    std::string name = LabelName(l);
    std::cout << name << std::string(name.size() < 17 ? 17 - name.size() : 1, ' ')
              << (std::isnan(k) ? "   n/a" : FormatFixed(k, 3)) << "   " << FormatFixed(dist[l], 1) << "%\n";
    csv += name + "," + (std::isnan(k) ? "nan" : FormatDouble(k)) + "," + FormatDouble(dist[l]) + "\n";
  }
  if (!a.common.out.empty()) {
    EnsureDir(a.common.out);
    WriteTextFile((fs::path(a.common.out) / "agreement.csv").string(), csv);
    StampRun(a.common.out, sub);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// split

struct SplitArgs {
  Common common;
  std::string annotations;
  std::string format = "native";
  size_t n_train = 0, n_val = 0, n_test = 0;
  bool by_speaker = false;
};

int RunSplit(const SplitArgs &a, const CLI::App &sub) {
  const auto anns = ReadAnyAnnotations(a.annotations, a.format, 3);
  if (anns.empty()) throw InputError("no annotated clips in " + a.annotations);
  std::vector<std::string> keys;
  std::unordered_map<std::string, std::string> speaker;
  for (const auto &x : anns) {
    keys.push_back(x.key());
    speaker[x.key()] = x.source_id;
  }
  SplitSpec spec{a.n_train, a.n_val, a.n_test, a.by_speaker};
  if (spec.n_train + spec.n_val + spec.n_test == 0) {
    // Default: 80/10/10 of the available units.
    size_t units = keys.size();
    if (a.by_speaker) {
      std::set<std::string> s;
      for (const auto &[k, v] : speaker) s.insert(v);
      units = s.size();
    }
    spec.n_val = units / 10;
    spec.n_test = units / 10;
    spec.n_train = units - spec.n_val - spec.n_test;
  }
  const auto splits = AssignSplits(keys, spec, a.common.seed, a.by_speaker ? &speaker : nullptr);
  EnsureDir(a.common.out);
  WriteTextFile((fs::path(a.common.out) / "splits.csv").string(), FormatSplits(splits));
  StampRun(a.common.out, sub);
  std::map<std::string, size_t> counts;
  for (const auto &s : splits) ++counts[SplitName(s.split)];
  for (const auto &[k, v] : counts) std::cout << k << ": " << v << " clips\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train / ablate share the model and optimization options.

struct ModelArgs {
  std::string features_dir, annotations, splits;
  std::string arch = "convlstm";
  std::string streams = "mfb,f0";
  std::string loss = "improved";
  int stl_label = -1;
  double focal_gamma = 2.0, task_mix = 0.5, w_pos = 0.0, w_neg = 0.0;
  double lr = 0.01;
  int batch_size = 256, max_epochs = 100, patience = 5;
  int hidden = 64, conv_channels = 64, embed = 64;
  double threshold = 0.5;
  std::string precision = "f32";
};

void AddModelOptions(CLI::App *sub, ModelArgs &m) {
  sub->add_option("--features-dir", m.features_dir, "Directory of .sepf feature files")->required();
  sub->add_option("--annotations", m.annotations, "Annotation CSV")->required();
  sub->add_option("--splits", m.splits, "Split CSV (clip_id,split)")->required();
  sub->add_option("--arch", m.arch, "lstm or convlstm")->capture_default_str();
  sub->add_option("--streams", m.streams, "Comma-separated streams: mfb,f0,atv,phone")->capture_default_str();
  sub->add_option("--loss", m.loss, "stl, mtl or improved")->capture_default_str();
  sub->add_option("--stl-label", m.stl_label, "STL target: -1 = any, 0-4 = one event type")->capture_default_str();
  sub->add_option("--focal-gamma", m.focal_gamma)->capture_default_str();
  sub->add_option("--task-mix", m.task_mix, "Weight of the any-branch term in improved mode")->capture_default_str();
  sub->add_option("--w-pos", m.w_pos, "Positive class weight; 0 = inverse frequency")->capture_default_str();
  sub->add_option("--w-neg", m.w_neg, "Negative class weight; 0 = inverse frequency")->capture_default_str();
  sub->add_option("--lr", m.lr)->capture_default_str();
  sub->add_option("--batch-size", m.batch_size)->capture_default_str();
  sub->add_option("--max-epochs", m.max_epochs)->capture_default_str();
  sub->add_option("--patience", m.patience, "0 disables early stopping")->capture_default_str();
  sub->add_option("--hidden", m.hidden)->capture_default_str();
  sub->add_option("--conv-channels", m.conv_channels)->capture_default_str();
  sub->add_option("--embed", m.embed)->capture_default_str();
  sub->add_option("--threshold", m.threshold)->capture_default_str();
  sub->add_option("--precision", m.precision, "f32 or f64 arithmetic")->capture_default_str();
}

TrainConfig MakeTrainConfig(const ModelArgs &m, uint64_t seed) {
  TrainConfig cfg;
  cfg.arch.arch = nn::ParseArch(m.arch);
  cfg.arch.streams = ParseStreams(m.streams);
  cfg.arch.hidden = m.hidden;
  cfg.arch.conv_channels = m.conv_channels;
  cfg.arch.embed = m.embed;
  if (m.hidden < 1 || m.conv_channels < 1 || m.embed < 1) throw InputError("layer widths must be positive");
  cfg.loss.mode = ParseLossMode(m.loss);
  cfg.loss.stl_label = m.stl_label;
  cfg.loss.focal_gamma = m.focal_gamma;
  cfg.loss.task_mix = m.task_mix;
  if ((m.w_pos > 0) != (m.w_neg > 0)) throw InputError("--w-pos and --w-neg must be given together");
  cfg.auto_class_weights = m.w_pos <= 0;
  if (!cfg.auto_class_weights) {
    cfg.loss.w_pos = m.w_pos;
    cfg.loss.w_neg = m.w_neg;
  }
  cfg.adam.lr = m.lr;
  cfg.batch_size = m.batch_size;
  cfg.max_epochs = m.max_epochs;
  cfg.patience = m.patience;
  cfg.threshold = m.threshold;
  cfg.seed = seed;
  if (m.precision != "f32" && m.precision != "f64") throw InputError("--precision must be f32 or f64");
  return cfg;
}

struct Fitted {
  nn::Model<float> best;
  Normalizer norm;
  LossConfig loss;
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

Fitted Fit(std::span<const Example *const> train, std::span<const Example *const> val, const TrainConfig &cfg,
           const std::string &precision, const std::function<void(const EpochLog &)> &on_epoch) {
  Fitted f;
  if (precision == "f64") {
    auto r = Train<double>(train, val, cfg, on_epoch);
    f.best = r.best.template Cast<float>();
    f.norm = std::move(r.norm);
    f.loss = r.loss;
    f.log = std::move(r.log);
    f.best_epoch = r.best_epoch;
  } else {
    auto r = Train<float>(train, val, cfg, on_epoch);
    f.best = std::move(r.best);
    f.norm = std::move(r.norm);
    f.loss = r.loss;
    f.log = std::move(r.log);
    f.best_epoch = r.best_epoch;
  }
  return f;
}

struct TrainArgs {
  Common common;
  ModelArgs model;
};

int RunTrain(const TrainArgs &a, const CLI::App &sub) {
  const TrainConfig cfg = MakeTrainConfig(a.model, a.common.seed);
  RequireFile(a.model.splits, "split file");
  const auto anns = ReadAnyAnnotations(a.model.annotations, "native", 3);
  const auto splits = ReadSplits(a.model.splits);
  const auto train = LoadExamples(a.model.features_dir, anns, KeysInSplit(splits, Split::kTrain), cfg.arch.streams);
  const auto val = LoadExamples(a.model.features_dir, anns, KeysInSplit(splits, Split::kVal), cfg.arch.streams);
  if (train.empty() || val.empty()) throw InputError("train and val splits must both be non-empty");
  EnsureDir(a.common.out);
  std::ofstream log((fs::path(a.common.out) / "train_log.jsonl").string());
  if (!log) throw Error("cannot write training log");
  const Fitted f = Fit(Pointers(train), Pointers(val), cfg, a.model.precision, [&](const EpochLog &e) {
    log << EpochLogJson(e).dump() << "\n";
    log.flush();
    std::cout << "epoch " << e.epoch << "  loss " << FormatFixed(e.train_loss, 4) << "  val F1(any) "
              << FormatFixed(e.val_f1_any, 4) << "\n";
  });
  SaveTrainedModel((fs::path(a.common.out) / "model.sepm").string(), f.best, f.norm,
                   TrainMetadata(cfg, f.loss, f.best_epoch) + "precision=" + a.model.precision + "\n");
  StampRun(a.common.out, sub);
  std::cout << "best epoch " << f.best_epoch << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  Common common;
  std::string checkpoint, scores, features_dir, annotations, splits, split = "test", streams;
  double threshold = 0.5;
};

std::vector<ScoredClip> ScoreWithCheckpoint(const EvaluateArgs &a, std::span<const ClipAnnotation> anns,
                                            const std::vector<std::string> &keys) {
  RequireFile(a.checkpoint, "checkpoint");
  TrainedModel tm = LoadTrainedModel(a.checkpoint);
  if (!a.streams.empty() && ParseStreams(a.streams) != tm.model.config().streams)
    throw InputError("architecture/stream mismatch: checkpoint expects different feature streams than --streams");
  const auto examples = LoadExamples(a.features_dir, anns, keys, tm.model.config().streams);
  return Predict(tm.model, tm.norm, Pointers(examples));
}

int RunEvaluate(const EvaluateArgs &a, const CLI::App &sub) {
  if (a.checkpoint.empty() == a.scores.empty()) throw InputError("give exactly one of --checkpoint or --scores");
  const auto anns = ReadAnyAnnotations(a.annotations, "native", 3);
  std::unordered_map<std::string, ClipTargets> truth;
  for (const auto &x : anns) truth[x.key()] = DeriveTargets(x);

  std::vector<std::string> keys;
  if (!a.splits.empty()) {
    RequireFile(a.splits, "split file");
    keys = KeysInSplit(ReadSplits(a.splits), ParseSplit(a.split));
  }
  std::vector<ScoredClip> scored;
  if (!a.checkpoint.empty()) {
    if (a.features_dir.empty()) throw InputError("--checkpoint needs --features-dir");
    if (keys.empty()) {
      for (const auto &x : anns) keys.push_back(x.key());
    }
    scored = ScoreWithCheckpoint(a, anns, keys);
  } else {
    RequireFile(a.scores, "scores file");
    const std::set<std::string> wanted(keys.begin(), keys.end());
    for (const auto &row : ReadScores(a.scores)) {
      if (!wanted.empty() && !wanted.count(row.clip_id)) continue;
      auto it = truth.find(row.clip_id);
      if (it == truth.end()) throw InputError("no annotation for scored clip " + row.clip_id);
      ScoredClip sc;
      sc.clip_id = row.clip_id;
      sc.score = row.score;
      for (size_t l = 0; l < kNumEventTypes; ++l) sc.truth[l] = it->second.hard[l];
      sc.truth[kAnyIndex] = it->second.any;
      scored.push_back(sc);
    }
  }
  if (scored.empty()) throw InputError("no clips to evaluate");
  const EvalReport report = Evaluate(scored, a.threshold);

  EnsureDir(a.common.out);
  std::vector<ClipScores> rows;
  for (const auto &s : scored) rows.push_back({s.clip_id, s.score});
  WriteTextFile((fs::path(a.common.out) / "scores.csv").string(), FormatScores(rows));
  WriteTextFile((fs::path(a.common.out) / "report.csv").string(), FormatReportCsv(report));
  StampRun(a.common.out, sub);
  const std::vector<ReportRow> table = {{fs::path(a.checkpoint.empty() ? a.scores : a.checkpoint).stem().string(),
                                         report}};
  std::cout << "clips: " << report.clips << "\n"
            << FormatTableText(table, TableKind::kSummary) << "\n"
            << FormatTableText(table, TableKind::kPerType);
  return 0;
}

// ---------------------------------------------------------------------------
// ablate

struct AblateArgs {
  Common common;
  ModelArgs model;
  std::string sizes;
  std::vector<std::string> test_sets;
};

int RunAblate(const AblateArgs &a, const CLI::App &sub) {
  const TrainConfig cfg = MakeTrainConfig(a.model, a.common.seed);
  RequireFile(a.model.splits, "split file");
  const auto anns = ReadAnyAnnotations(a.model.annotations, "native", 3);
  const auto splits = ReadSplits(a.model.splits);
  std::vector<size_t> sizes;
  for (const auto &s : SplitList(a.sizes)) sizes.push_back(ParseNumber<size_t>(s, "--sizes"));
  if (sizes.empty()) throw InputError("--sizes is empty");

  std::vector<std::string> pool = KeysInSplit(splits, Split::kTrain);
  std::sort(pool.begin(), pool.end());
  for (size_t n : sizes)
    if (n == 0 || n > pool.size())
      throw InputError("subset size " + std::to_string(n) + " exceeds the " + std::to_string(pool.size()) +
                       " training clips");

  // Test sets: NAME=SPLITS_CSV uses that file's test split; default is the
  // test split of --splits.
  std::vector<std::pair<std::string, std::vector<std::string>>> tests;
  for (const auto &spec : a.test_sets) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw InputError("--test-set expects NAME=SPLITS_CSV");
    const std::string path = spec.substr(eq + 1);
    RequireFile(path, "test split file");
    tests.emplace_back(spec.substr(0, eq), KeysInSplit(ReadSplits(path), Split::kTest));
  }
  if (tests.empty()) tests.emplace_back("test", KeysInSplit(splits, Split::kTest));
  for (const auto &[name, keys] : tests)
    if (keys.empty()) throw InputError("test set " + name + " has no test clips");

  // Nested subsets: prefixes of one seeded permutation.
  std::vector<std::string> order = pool;
  Rng rng(a.common.seed ^ 0x5ab1a7e5ULL);
  rng.Shuffle(order);

  const auto all_train = LoadExamples(a.model.features_dir, anns, pool, cfg.arch.streams);
  const auto val = LoadExamples(a.model.features_dir, anns, KeysInSplit(splits, Split::kVal), cfg.arch.streams);
  if (val.empty()) throw InputError("the val split is empty");
  std::unordered_map<std::string, const Example *> by_key;
  for (const auto &e : all_train) by_key[e.key] = &e;
  std::vector<std::pair<std::string, std::vector<Example>>> test_examples;
  for (const auto &[name, keys] : tests)
    test_examples.emplace_back(name, LoadExamples(a.model.features_dir, anns, keys, cfg.arch.streams));

  std::string csv = "test_set,size,clips,any_f1,any_eer,any_wa";
  for (size_t l = 0; l < kNumEventTypes; ++l) csv += std::string(",") + kScoreColumns[l] + "_f1";
  csv += ",best_epoch\n";
  for (size_t n : sizes) {
    std::vector<std::string> subset(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
    std::sort(subset.begin(), subset.end());
    std::vector<const Example *> train;
    for (const auto &k : subset) train.push_back(by_key.at(k));
    const Fitted f = Fit(train, Pointers(val), cfg, a.model.precision, {});
    nn::Model<float> model = f.best;
    for (const auto &[name, examples] : test_examples) {
      const EvalReport r = Evaluate(Predict(model, f.norm, Pointers(examples)), cfg.threshold);
      csv += name + "," + std::to_string(n) + "," + std::to_string(r.clips) + "," + FormatDouble(r.any().f1) + "," +
             (r.any().has_eer ? FormatDouble(r.any().eer) : "nan") + "," +
             (std::isnan(r.any().wa) ? "nan" : FormatDouble(r.any().wa));
      for (size_t l = 0; l < kNumEventTypes; ++l) csv += "," + FormatDouble(r.labels[l].f1);
      csv += "," + std::to_string(f.best_epoch) + "\n";
      std::cout << name << " size " << n << ": F1(any) " << FormatFixed(r.any().f1, 4) << "\n";
    }
  }
  EnsureDir(a.common.out);
  WriteTextFile((fs::path(a.common.out) / "ablation.csv").string(), csv);
  StampRun(a.common.out, sub);
  return 0;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  Common common;
  SynthConfig cfg;
  std::string streams = "mfb,f0";
};

int RunSynth(SynthArgs a, const CLI::App &sub) {
  a.cfg.seed = a.common.seed;
  a.cfg.streams = ParseStreams(a.streams);
  if (a.cfg.n_clips == 0) throw InputError("--n-clips must be positive");
  const fs::path feat = fs::path(a.common.out) / "features";
  EnsureDir(feat.string());
  std::vector<ClipAnnotation> anns;
  for (size_t i = 0; i < a.cfg.n_clips; ++i) {
    SynthClip c = GenerateSynthClip(a.cfg, i);
    for (const auto &s : c.features.streams)
      WriteFeatureFile((feat / FeatureFileName(c.annotation.key(), s.name)).string(), s);
    anns.push_back(std::move(c.annotation));
  }
  WriteTextFile((fs::path(a.common.out) / "annotations.csv").string(), FormatAnnotations(anns));
  StampRun(a.common.out, sub);
  std::cout << "wrote " << anns.size() << " synthetic clips\n";
  return 0;
}

int Run(int argc, char **argv) {
  std::vector<std::string> args(argv, argv + argc);
  args = MergeConfig(args);

  CLI::App app{"sepkit: stuttering event detection pipeline"};
  app.require_subcommand(1);

  ExtractArgs ex;
  auto *s_extract = app.add_subcommand("extract", "Cut jittered clips around speech/pause boundaries");
  AddCommon(s_extract, ex.common);
  s_extract->add_option("--audio-dir", ex.audio_dir, "Directory of WAV files")->required();
  s_extract->add_option("--clip-len", ex.clip.clip_len, "Clip length in seconds")->capture_default_str();
  s_extract->add_option("--jitter", ex.clip.jitter, "Max offset from the boundary, seconds")->capture_default_str();
  s_extract->add_option("--max-clips", ex.clip.max_clips_per_source)->capture_default_str();
  s_extract->add_option("--vad-enter-db", ex.vad.enter_dbfs)->capture_default_str();
  s_extract->add_option("--vad-exit-db", ex.vad.exit_dbfs)->capture_default_str();
  s_extract->add_option("--min-duration", ex.vad.min_duration, "Shortest VAD segment, seconds")->capture_default_str();

  FeaturizeArgs fe;
  auto *s_feat = app.add_subcommand("featurize", "Compute frame features for every clip in a manifest");
  AddCommon(s_feat, fe.common);
  s_feat->add_option("--manifest", fe.manifest, "Clip manifest CSV")->required();
  s_feat->add_option("--features", fe.features, "Streams: mfb,f0,atv,phone")->capture_default_str();
  s_feat->add_option("--external-dir", fe.external_dir, "Directory of precomputed atv/phone .sepf files");
  s_feat->add_option("--jobs", fe.jobs, "Worker threads")->capture_default_str();

  AgreementArgs ag;
  auto *s_agree = app.add_subcommand("agreement", "Fleiss kappa and label distribution");
  AddCommon(s_agree, ag.common, false);
  s_agree->add_option("--annotations", ag.annotations, "Annotation CSV")->required();
  s_agree->add_option("--format", ag.format, "native or sep28k")->capture_default_str();
  s_agree->add_option("--n-annotators", ag.n_annotators)->capture_default_str();

  SplitArgs sp;
  auto *s_split = app.add_subcommand("split", "Assign clips to train/val/test");
  AddCommon(s_split, sp.common);
  s_split->add_option("--annotations", sp.annotations, "Annotation CSV")->required();
  s_split->add_option("--format", sp.format, "native or sep28k")->capture_default_str();
  s_split->add_option("--n-train", sp.n_train)->capture_default_str();
  s_split->add_option("--n-val", sp.n_val)->capture_default_str();
  s_split->add_option("--n-test", sp.n_test)->capture_default_str();
  s_split->add_flag("--by-speaker", sp.by_speaker, "Split by source id instead of by clip");

  TrainArgs tr;
  auto *s_train = app.add_subcommand("train", "Train a detector");
  AddCommon(s_train, tr.common);
  AddModelOptions(s_train, tr.model);

  EvaluateArgs ev;
  auto *s_eval = app.add_subcommand("evaluate", "Score clips and report metrics");
  AddCommon(s_eval, ev.common);
  s_eval->add_option("--checkpoint", ev.checkpoint, "Trained model");
  s_eval->add_option("--scores", ev.scores, "Precomputed scores CSV instead of a checkpoint");
  s_eval->add_option("--features-dir", ev.features_dir, "Directory of .sepf feature files");
  s_eval->add_option("--annotations", ev.annotations, "Annotation CSV")->required();
  s_eval->add_option("--splits", ev.splits, "Split CSV; restricts evaluation to --split");
  s_eval->add_option("--split", ev.split, "train, val or test")->capture_default_str();
  s_eval->add_option("--streams", ev.streams, "Expected streams; must match the checkpoint");
  s_eval->add_option("--threshold", ev.threshold)->capture_default_str();

  AblateArgs ab;
  auto *s_ablate = app.add_subcommand("ablate", "Train on nested subsets of the training split");
  AddCommon(s_ablate, ab.common);
  AddModelOptions(s_ablate, ab.model);
  s_ablate->add_option("--sizes", ab.sizes, "Comma-separated subset sizes")->required();
  s_ablate->add_option("--test-set", ab.test_sets, "NAME=SPLITS_CSV; repeatable");

  SynthArgs sy;
  auto *s_synth = app.add_subcommand("synth", "Generate synthetic feature bundles with planted events");
  AddCommon(s_synth, sy.common);
  s_synth->add_option("--n-clips", sy.cfg.n_clips)->capture_default_str();
  s_synth->add_option("--frames", sy.cfg.frames)->capture_default_str();
  s_synth->add_option("--event-prob", sy.cfg.event_prob)->capture_default_str();
  s_synth->add_option("--max-instances", sy.cfg.max_instances)->capture_default_str();
  s_synth->add_option("--streams", sy.streams)->capture_default_str();

  std::vector<char *> cargv;
  for (auto &s : args) cargv.push_back(s.data());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*s_extract) return RunExtract(ex, *s_extract);
  if (*s_feat) return RunFeaturize(fe, *s_feat);
  if (*s_agree) return RunAgreement(ag, *s_agree);
  if (*s_split) return RunSplit(sp, *s_split);
  if (*s_train) return RunTrain(tr, *s_train);
  if (*s_eval) return RunEvaluate(ev, *s_eval);
  if (*s_ablate) return RunAblate(ab, *s_ablate);
  if (*s_synth) return RunSynth(sy, *s_synth);
  return 2;
}

}  // namespace

int main(int argc, char **argv) {
  KeepLargeAllocationsOnHeap();
  try {
    return Run(argc, argv);
  } catch (const InputError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
