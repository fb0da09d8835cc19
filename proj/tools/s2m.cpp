// Copyright 2026 The s2m Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// s2m: command-line front end.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "s2m/analysis.hpp"
#include "s2m/audio_io.hpp"
#include "s2m/midi.hpp"
#include "s2m/model/checkpoint.hpp"
#include "s2m/model/train.hpp"
#include "s2m/pipeline.hpp"
#include "s2m/service.hpp"
#include "s2m/sparsifier.hpp"
#include "s2m/speech_features.hpp"
#include "s2m/symbolic.hpp"
#include "s2m/task_gen.hpp"
#include "s2m/toy_corpus.hpp"

namespace {

using namespace s2m;

const std::map<std::string, Task> kTaskMap = {{"gapfill", Task::kGapFill}, {"denoise", Task::kDenoise}};
const std::map<std::string, TrackKind> kContourMap = {
    {"f0", TrackKind::kF0}, {"f1", TrackKind::kF1}, {"f2", TrackKind::kF2}, {"f3", TrackKind::kF3}};
const std::map<std::string, SparsifyTechnique> kTechniqueMap = {{"heuristic", SparsifyTechnique::kHeuristic},
                                                                {"syllable", SparsifyTechnique::kSyllable}};
const std::map<std::string, SparsifyLevel> kLevelMap = {
    {"low", SparsifyLevel::kLow}, {"medium", SparsifyLevel::kMedium}, {"high", SparsifyLevel::kHigh}};

std::vector<std::uint8_t> read_bytes(const std::string& path) { return nn::read_file_bytes(path); }

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(Errc::kIo, "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) fail(Errc::kIo, "cannot write " + path.string());
  f << text;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// --- extract --------------------------------------------------------------

struct ExtractArgs {
  std::string input, output, dump_audio;
};

void run_extract(const ExtractArgs& a) {
  const AudioClip clip = load_wav(read_bytes(a.input));
  if (!a.dump_audio.empty()) write_bytes(a.dump_audio, write_wav(clip));
  const FeatureBundle f = extract_features(clip);
  std::string csv = "frame_index,time_s,f0,f1,f2,f3,loudness_db\n";
  for (std::size_t i = 0; i < f.f0.size(); ++i) {
    csv += std::to_string(i) + "," + fmt(static_cast<double>(i) * kHopSeconds) + "," + fmt(f.f0.values[i]) + "," +
           fmt(f.f1.values[i]) + "," + fmt(f.f2.values[i]) + "," + fmt(f.f3.values[i]) + "," +
           fmt(f.loudness.values[i]) + "\n";
  }
  if (a.output.empty()) {
    std::cout << csv;
  } else {
    write_text(a.output, csv);
  }
}

// --- sparsify -------------------------------------------------------------

struct SparsifyArgs {
  std::string input, output;
  TrackKind contour = TrackKind::kF0;
  SparsifyConfig cfg;
};

void run_sparsify(const SparsifyArgs& a) {
  const FeatureBundle f = extract_features(load_wav(read_bytes(a.input)));
  const SparseTrack s = sparsify(f.contour(a.contour), f.loudness, f.f0, a.cfg);
  std::string csv = "frame_index,time_s,value,kept\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    csv += std::to_string(i) + "," + fmt(static_cast<double>(i) * kHopSeconds) + "," +
           (s.values[i] ? fmt(*s.values[i]) : std::string()) + "," + (s.keep_mask[i] ? "1" : "0") + "\n";
  }
  if (a.output.empty()) {
    std::cout << csv;
  } else {
    write_text(a.output, csv);
  }
  std::cerr << "kept " << s.kept_count() << " of " << s.size() << " frames\n";
}

// --- prepare --------------------------------------------------------------

struct PrepareArgs {
  std::string manifest, output;
};

/// Manifest: one MIDI path per line, relative paths resolved against the
/// manifest's directory.
void run_prepare(const PrepareArgs& a) {
  std::ifstream in(a.manifest);
  if (!in) fail(Errc::kIo, "cannot open " + a.manifest);
  const std::filesystem::path base = std::filesystem::path(a.manifest).parent_path();
  std::vector<PolyTrack> tracks;
  std::string line;
  std::size_t skipped = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::filesystem::path p(line);
    if (p.is_relative()) p = base / p;
    try {
      tracks.push_back(read_midi(read_bytes(p.string())));
    } catch (const Error& e) {
      ++skipped;
      std::cerr << "skipping " << p.string() << ": " << e.what() << "\n";
    }
  }
  const std::vector<TokenSeq> corpus = slice_corpus(tracks);
  write_corpus_file(a.output, corpus);
  std::cerr << "wrote " << corpus.size() << " sequences from " << tracks.size() << " files (" << skipped
            << " skipped)\n";
}

// --- toy-corpus -----------------------------------------------------------

struct ToyArgs {
  std::string kind = "diatonic", output;
  std::size_t count = 200, frames = 200;
  std::uint64_t seed = 1;
  int key = 49;
};

void run_toy(const ToyArgs& a) {
  std::vector<TokenSeq> corpus;
  if (a.kind == "diatonic") {
    corpus = diatonic_corpus(a.count, a.frames, a.seed);
  } else if (a.kind == "chromatic") {
    corpus = chromatic_corpus(a.count, a.frames, a.seed);
  } else {
    corpus = constant_corpus(a.count, a.frames, a.key);
  }
  write_corpus_file(a.output, corpus);
}

// --- train ----------------------------------------------------------------

struct TrainArgs {
  Task task = Task::kGapFill;
  std::string preset = "desk", corpus, output, resume;
  std::uint64_t seed = 1;
  std::int64_t steps = 1000;
  std::size_t batch = 8;
  std::int64_t log_every = 50;
  bool no_augment = false;
};

void run_train(const TrainArgs& a) {
  const ModelSpec spec = a.preset == "paper" ? paper_preset(a.task) : desk_preset(a.task);
  std::vector<TokenSeq> corpus = read_corpus_file(a.corpus);
  nn::Trainer<float> trainer = a.resume.empty() ? nn::Trainer<float>(spec, a.seed)
                                                : nn::Trainer<float>(nn::load_checkpoint<float>(a.resume, spec), a.seed);
  BatchStream stream(std::move(corpus), a.task, {a.batch, !a.no_augment}, a.seed + 1);
  const auto t0 = std::chrono::steady_clock::now();
  double running = 0.0;
  std::int64_t in_window = 0;
  for (std::int64_t s = 0; s < a.steps; ++s) {
    const nn::LossValue l = trainer.step(stream.next());
    running += l.nll;
    ++in_window;
    if (a.log_every > 0 && (trainer.state().step % a.log_every == 0 || s + 1 == a.steps)) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cerr << "step " << trainer.state().step << " nll " << fmt(running / in_window) << " mse " << fmt(l.mse)
                << " lr " << nn::learning_rate(spec, trainer.state().step) << " elapsed " << fmt(secs) << "s\n";
      running = 0.0;
      in_window = 0;
    }
  }
  nn::save_checkpoint(a.output, trainer.state());
  std::cerr << "saved " << a.output << "\n";
}

// --- infer ----------------------------------------------------------------

struct InferArgs {
  std::string input, out_dir, checkpoints_dir = "checkpoints";
  ConvertConfig cfg;
};

void run_infer(const InferArgs& a) {
  const ModelBundle models = load_bundle(a.checkpoints_dir);
  const ConvertResult r = convert(load_wav(read_bytes(a.input)), a.cfg, models);
  std::filesystem::create_directories(a.out_dir);
  const std::filesystem::path dir(a.out_dir);
  write_bytes(dir / "raw.mid", r.raw_midi);
  if (a.cfg.model == Task::kGapFill) write_bytes(dir / "sparse.mid", r.sparse_midi);
  write_bytes(dir / "generated.mid", r.generated_midi);
  nlohmann::json report = {{"config", config_json(a.cfg)}, {"timings_ms", r.timings_ms}};
  std::cout << report.dump(2) << "\n";
}

// --- analyze --------------------------------------------------------------

struct AnalyzeArgs {
  std::string corpus, compare_with, output;
};

void run_analyze(const AnalyzeArgs& a) {
  const std::vector<TokenSeq> seqs = read_corpus_file(a.corpus);
  const IntervalHistogram h = interval_histogram(seqs);
  const std::string csv = histogram_csv(h);
  if (a.output.empty()) {
    std::cout << csv;
  } else {
    write_text(a.output, csv);
  }
  nlohmann::json report = {{"total", h.total},
                           {"chromatic_fraction", chromatic_fraction(h)},
                           {"large_interval_fraction", large_interval_fraction(h)}};
  if (!a.compare_with.empty()) {
    const std::vector<TokenSeq> other = read_corpus_file(a.compare_with);
    report["comparison"] = to_json(compare(h, interval_histogram(other)));
  }
  (a.output.empty() ? std::cerr : std::cout) << report.dump(2) << "\n";
}

// --- serve ----------------------------------------------------------------

struct ServeArgs {
  std::string host = "0.0.0.0", checkpoints_dir = "checkpoints";
  int port = 8080;
  ServiceOptions options;
};

void run_serve(ServeArgs a) {
  Service service(load_bundle(a.checkpoints_dir), a.options);
  httplib::Server server;
  const int threads = std::max(2, a.options.workers + 1);
  server.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
  service.mount(server);
  std::cerr << "listening on " << a.host << ":" << a.port << " (models: " << service.list_models().body << ")\n";
  if (!server.listen(a.host, a.port)) fail(Errc::kIo, "cannot listen on port " + std::to_string(a.port));
}

template <typename E>
CLI::Option* enum_option(CLI::App* app, const std::string& name, E& target, const std::map<std::string, E>& map,
                         const std::string& help) {
  return app->add_option(name, target, help)->transform(CLI::CheckedTransformer(map, CLI::ignore_case));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"s2m: speech-to-melody toolkit"};
  app.require_subcommand(1);

  ExtractArgs ex;
  auto* extract = app.add_subcommand("extract", "Write per-frame F0, F1-F3 and loudness as CSV");
  extract->add_option("input", ex.input, "WAV file")->required()->check(CLI::ExistingFile);
  extract->add_option("-o,--out", ex.output, "CSV path (stdout when omitted)");
  extract->add_option("--dump-audio", ex.dump_audio, "Also write the canonical 16 kHz mono clip here");

  SparsifyArgs sp;
  auto* sparsify_cmd = app.add_subcommand("sparsify", "Show which frames of a contour are kept");
  sparsify_cmd->add_option("input", sp.input, "WAV file")->required()->check(CLI::ExistingFile);
  sparsify_cmd->add_option("-o,--out", sp.output, "CSV path (stdout when omitted)");
  enum_option(sparsify_cmd, "--contour", sp.contour, kContourMap, "f0, f1, f2 or f3");
  enum_option(sparsify_cmd, "--technique", sp.cfg.technique, kTechniqueMap, "heuristic or syllable");
  enum_option(sparsify_cmd, "--level", sp.cfg.level, kLevelMap, "low, medium or high");

  PrepareArgs pr;
  auto* prepare = app.add_subcommand("prepare", "Skyline a list of MIDI files into a JSONL training corpus");
  prepare->add_option("--manifest", pr.manifest, "Text file with one MIDI path per line")->required();
  prepare->add_option("-o,--out", pr.output, "Output JSONL")->required();

  ToyArgs toy;
  auto* toy_cmd = app.add_subcommand("toy-corpus", "Generate a synthetic melody corpus");
  toy_cmd->add_option("--kind", toy.kind, "diatonic, chromatic or constant")
      ->check(CLI::IsMember({"diatonic", "chromatic", "constant"}));
  toy_cmd->add_option("--count", toy.count, "Number of sequences");
  toy_cmd->add_option("--frames", toy.frames, "Content frames per sequence")->check(CLI::Range(1, 500));
  toy_cmd->add_option("--seed", toy.seed, "Random seed");
  toy_cmd->add_option("--key", toy.key, "Key of the constant corpus")->check(CLI::Range(1, 88));
  toy_cmd->add_option("-o,--out", toy.output, "Output JSONL")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a gap-fill or denoise model");
  enum_option(train, "--task", tr.task, kTaskMap, "gapfill or denoise")->required();
  train->add_option("--preset", tr.preset, "paper or desk")->check(CLI::IsMember({"paper", "desk"}));
  train->add_option("--seed", tr.seed, "Random seed");
  train->add_option("--steps", tr.steps, "Optimizer steps")->check(CLI::PositiveNumber);
  train->add_option("--batch", tr.batch, "Batch size")->check(CLI::PositiveNumber);
  train->add_option("--corpus", tr.corpus, "JSONL corpus")->required()->check(CLI::ExistingFile);
  train->add_option("-o,--out", tr.output, "Checkpoint to write")->required();
  train->add_option("--resume", tr.resume, "Continue from this checkpoint");
  train->add_option("--log-every", tr.log_every, "Steps between log lines (0 disables)");
  train->add_flag("--no-augment", tr.no_augment, "Disable random transposition");

  InferArgs in;
  auto* infer = app.add_subcommand("infer", "Convert a WAV file into raw, sparse and generated MIDI");
  infer->add_option("input", in.input, "WAV file")->required()->check(CLI::ExistingFile);
  infer->add_option("out_dir", in.out_dir, "Output directory")->required();
  enum_option(infer, "--model", in.cfg.model, kTaskMap, "gapfill or denoise");
  enum_option(infer, "--contour", in.cfg.contour, kContourMap, "f0, f1, f2 or f3");
  enum_option(infer, "--technique", in.cfg.sparsify.technique, kTechniqueMap, "heuristic or syllable");
  enum_option(infer, "--level", in.cfg.sparsify.level, kLevelMap, "low, medium or high");
  infer->add_option("--seed", in.cfg.seed, "Sampling seed");
  infer->add_option("--temperature", in.cfg.temperature, "Gap-fill sampling temperature (0 = argmax)")
      ->check(CLI::Range(0.0, 10.0));
  infer->add_option("--checkpoints-dir", in.checkpoints_dir, "Directory with gapfill.ckpt / denoise.ckpt")
      ->envname("S2M_CHECKPOINTS_DIR");

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "Interval histogram of a JSONL corpus");
  analyze->add_option("corpus", an.corpus, "JSONL corpus")->required()->check(CLI::ExistingFile);
  analyze->add_option("--compare", an.compare_with, "Second corpus for a divergence report")->check(CLI::ExistingFile);
  analyze->add_option("-o,--out", an.output, "Histogram CSV (stdout when omitted; the report then goes to stderr)");

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--host", sv.host, "Bind address")->envname("S2M_HOST");
  serve->add_option("--port", sv.port, "TCP port")->envname("S2M_PORT")->check(CLI::Range(1, 65535));
  serve->add_option("--checkpoints-dir", sv.checkpoints_dir, "Directory with gapfill.ckpt / denoise.ckpt")
      ->envname("S2M_CHECKPOINTS_DIR");
  serve->add_option("--max-upload-s", sv.options.max_upload_s, "Longest accepted clip in seconds")
      ->envname("S2M_MAX_UPLOAD_S")
      ->check(CLI::PositiveNumber);
  serve->add_option("--workers", sv.options.workers, "Concurrent conversions")
      ->envname("S2M_WORKERS")
      ->check(CLI::Range(1, 64));
  serve->add_option("--static-dir", sv.options.static_dir, "Web UI build to serve under /")->envname("S2M_STATIC_DIR");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*extract) run_extract(ex);
    if (*sparsify_cmd) run_sparsify(sp);
    if (*prepare) run_prepare(pr);
    if (*toy_cmd) run_toy(toy);
    if (*train) run_train(tr);
    if (*infer) run_infer(in);
    if (*analyze) run_analyze(an);
    if (*serve) run_serve(sv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
