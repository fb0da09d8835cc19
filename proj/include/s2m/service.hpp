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

// HTTP front end of the conversion pipeline.
//
//   POST /api/convert      multipart: "audio" (WAV) + "config" (JSON)
//   POST /api/convert_all  same input, zip of every configuration
//   GET  /api/health       version and checkpoint digests
//   GET  /api/models       loaded model variants
//
// Handlers are plain functions over byte strings so they can be exercised
// without a socket; mount() wires them into an httplib server.

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <string>
#include <utility>
#include <vector>

#include "s2m/archive.hpp"
#include "s2m/audio_io.hpp"
#include "s2m/error.hpp"
#include "s2m/model/checkpoint.hpp"
#include "s2m/pipeline.hpp"

// after Eigen: <resolv.h> defines a `_res` macro that clashes with Eigen parameter names
#include "httplib.h"
#include "json.hpp"

namespace s2m {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr std::size_t kDefaultMaxUploadBytes = 10u * 1024u * 1024u;
inline constexpr double kDefaultMaxUploadSeconds = 30.0;

struct ServiceOptions {
  std::size_t max_upload_bytes = kDefaultMaxUploadBytes;
  double max_upload_s = kDefaultMaxUploadSeconds;
  int workers = 2;               // concurrent conversions
  std::string static_dir;        // web UI build, optional
};

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

inline constexpr std::array<TrackKind, 4> kContours = {TrackKind::kF0, TrackKind::kF1, TrackKind::kF2, TrackKind::kF3};
inline constexpr std::array<SparsifyTechnique, 2> kTechniques = {SparsifyTechnique::kHeuristic,
                                                                 SparsifyTechnique::kSyllable};
inline constexpr std::array<SparsifyLevel, 3> kLevels = {SparsifyLevel::kLow, SparsifyLevel::kMedium,
                                                         SparsifyLevel::kHigh};

/// Loads "gapfill.ckpt" and "denoise.ckpt" from dir when present.
inline ModelBundle load_bundle(const std::string& dir) {
  ModelBundle b;
  for (Task t : {Task::kGapFill, Task::kDenoise}) {
    const std::filesystem::path p = std::filesystem::path(dir) / (std::string(task_name(t)) + ".ckpt");
    if (!std::filesystem::exists(p)) continue;
    LoadedModel m = load_model(nn::read_file_bytes(p.string()));
    if (m.spec.variant != t) fail(Errc::kModelVariantMismatch, p.string() + " holds a different variant");
    (t == Task::kGapFill ? b.gapfill : b.denoise) = std::move(m);
  }
  return b;
}

namespace service_detail {

template <typename E, std::size_t N, typename Name>
E parse_enum(const nlohmann::json& j, const char* key, const std::array<E, N>& options, Name name, E fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_string()) fail(Errc::kInvalidArgument, std::string(key) + " must be a string");
  const std::string v = j.at(key).get<std::string>();
  for (E e : options) {
    if (v == name(e)) return e;
  }
  fail(Errc::kInvalidArgument, "unknown " + std::string(key) + " '" + v + "'");
}

inline std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

inline int status_for(Errc code) {
  switch (code) {
    case Errc::kMalformedWav:
    case Errc::kUnsupportedFormat:
    case Errc::kEmptyAudio:
    case Errc::kInvalidRate:
      return 422;
    case Errc::kInvalidArgument:
    case Errc::kMissingCheckpoint:
    case Errc::kClipTooShort:
      return 400;
    default:
      return 500;
  }
}

inline std::string entry_stem(const ConvertConfig& c) {
  std::string s = std::string(task_name(c.model)) + "_" + std::string(track_kind_name(c.contour));
  if (c.model == Task::kGapFill) {
    s += "_" + std::string(technique_name(c.sparsify.technique)) + "_" + std::string(level_name(c.sparsify.level));
  }
  return s;
}

}  // namespace service_detail

/// Parses the JSON config of a request. Missing fields take defaults; a
/// missing seed is drawn by the server and echoed back.
inline ConvertConfig parse_config(const std::string& text, std::uint64_t fallback_seed) {
  namespace d = service_detail;
  nlohmann::json j;
  if (!text.empty()) {
    try {
      j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
      fail(Errc::kInvalidArgument, std::string("config is not valid JSON: ") + e.what());
    }
  }
  if (!j.is_null() && !j.is_object()) fail(Errc::kInvalidArgument, "config must be a JSON object");
  if (j.is_null()) j = nlohmann::json::object();
  ConvertConfig c;
  c.model = d::parse_enum(j, "model", std::array<Task, 2>{Task::kGapFill, Task::kDenoise}, task_name, Task::kGapFill);
  c.contour = d::parse_enum(j, "contour", kContours, track_kind_name, TrackKind::kF0);
  c.sparsify.technique = d::parse_enum(j, "technique", kTechniques, technique_name, SparsifyTechnique::kHeuristic);
  c.sparsify.level = d::parse_enum(j, "level", kLevels, level_name, SparsifyLevel::kMedium);
  c.seed = fallback_seed;
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned() && !(j.at("seed").is_number_integer() && j.at("seed").get<std::int64_t>() >= 0)) {
      fail(Errc::kInvalidArgument, "seed must be a non-negative integer");
    }
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("temperature")) {
    if (!j.at("temperature").is_number()) fail(Errc::kInvalidArgument, "temperature must be a number");
    c.temperature = j.at("temperature").get<double>();
    if (!(c.temperature >= 0.0) || c.temperature > 10.0) fail(Errc::kInvalidArgument, "temperature must be in [0, 10]");
  }
  return c;
}

inline nlohmann::json config_json(const ConvertConfig& c) {
  nlohmann::json j = {{"model", task_name(c.model)},
                      {"contour", track_kind_name(c.contour)},
                      {"seed", c.seed},
                      {"temperature", c.temperature}};
  if (c.model == Task::kGapFill) {
    j["technique"] = technique_name(c.sparsify.technique);
    j["level"] = level_name(c.sparsify.level);
  }
  return j;
}

class Service {
 public:
  Service(ModelBundle models, ServiceOptions options)
      : models_(std::move(models)), options_(std::move(options)), slots_(std::max(1, options_.workers)) {}

  const ModelBundle& models() const { return models_; }
  const ServiceOptions& options() const { return options_; }

  HttpReply health() const {
    nlohmann::json ck = nlohmann::json::object();
    if (models_.gapfill) ck["gapfill"] = service_detail::hex32(models_.gapfill->digest);
    if (models_.denoise) ck["denoise"] = service_detail::hex32(models_.denoise->digest);
    return {200, "application/json", nlohmann::json{{"status", "ok"}, {"version", kVersion}, {"checkpoints", ck}}.dump()};
  }

  HttpReply list_models() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const LoadedModel* m : {models_.get(Task::kGapFill), models_.get(Task::kDenoise)}) {
      if (m) arr.push_back({{"variant", task_name(m->spec.variant)}, {"spec", m->spec}});
    }
    return {200, "application/json", nlohmann::json{{"models", arr}}.dump()};
  }

  HttpReply convert(const std::string& audio, const std::string& config, const std::string& request_id) {
    return guarded(request_id, [&] {
      ConvertConfig cfg = parse_config(config, fresh_seed());
      const AudioClip clip = decode_upload(audio);
      ConvertResult r;
      {
        Slot slot(slots_);
        r = s2m::convert(clip, cfg, models_);
      }
      nlohmann::json artifacts = {{"raw", base64_encode(r.raw_midi)}, {"generated", base64_encode(r.generated_midi)}};
      nlohmann::json tokens = {{"raw", r.raw_tokens.tokens}, {"generated", r.generated_tokens.tokens}};
      if (cfg.model == Task::kGapFill) {
        artifacts["sparse"] = base64_encode(r.sparse_midi);
        tokens["sparse"] = r.sparse_tokens.tokens;
      }
      const nlohmann::json body = {{"request_id", request_id}, {"config", config_json(cfg)}, {"artifacts", artifacts},
                                   {"tokens", tokens},         {"timings_ms", r.timings_ms}, {"duration_s", clip.duration_s()}};
      return HttpReply{200, "application/json", body.dump()};
    });
  }

  /// Every configuration of one clip. Gap-fill: 4 contours x 2 techniques x
  /// 3 levels; denoise: 4 contours. Intermediates go under raw/ and sparse/.
  /// With every entry converted the reply is the zip; otherwise 207 with a
  /// per-entry manifest and the partial archive in base64.
  HttpReply convert_all(const std::string& audio, const std::string& config, const std::string& request_id) {
    return guarded(request_id, [&] {
      const ConvertConfig base = parse_config(config, fresh_seed());
      const AudioClip clip = decode_upload(audio);
      Slot slot(slots_);
      const FeatureBundle features = analyze_clip(clip);

      std::vector<ConvertConfig> configs;
      for (TrackKind contour : kContours) {
        for (SparsifyTechnique t : kTechniques) {
          for (SparsifyLevel l : kLevels) {
            ConvertConfig c = base;
            c.model = Task::kGapFill;
            c.contour = contour;
            c.sparsify = {t, l, base.sparsify.smoothing_radius_frames};
            configs.push_back(c);
          }
        }
      }
      for (TrackKind contour : kContours) {
        ConvertConfig c = base;
        c.model = Task::kDenoise;
        c.contour = contour;
        configs.push_back(c);
      }

      ZipWriter zip;
      nlohmann::json entries = nlohmann::json::array();
      std::map<std::string, bool> raw_written;
      bool all_ok = true;
      for (const ConvertConfig& c : configs) {
        const std::string stem = service_detail::entry_stem(c);
        const std::string name = "generated/" + stem + ".mid";
        try {
          const ConvertResult r = convert_features(features, c, models_);
          const std::string contour(track_kind_name(c.contour));
          if (!raw_written[contour]) {
            zip.add("raw/" + contour + ".mid", r.raw_midi);
            raw_written[contour] = true;
          }
          if (c.model == Task::kGapFill) {
            zip.add("sparse/" + contour + "_" + std::string(technique_name(c.sparsify.technique)) + "_" +
                        std::string(level_name(c.sparsify.level)) + ".mid",
                    r.sparse_midi);
          }
          zip.add(name, r.generated_midi);
          entries.push_back({{"name", name}, {"status", "ok"}, {"config", config_json(c)}});
        } catch (const Error& e) {
          all_ok = false;
          entries.push_back({{"name", name}, {"status", "error"}, {"error", errc_name(e.code())}, {"message", e.what()}});
        }
      }
      const nlohmann::json manifest = {{"request_id", request_id}, {"seed", base.seed}, {"entries", entries}};
      zip.add("manifest.json", manifest.dump(2));
      const std::vector<std::uint8_t> archive = zip.finish();
      if (all_ok) return HttpReply{200, "application/zip", std::string(archive.begin(), archive.end())};
      nlohmann::json partial = manifest;
      partial["archive"] = base64_encode(archive);
      return HttpReply{207, "application/json", partial.dump()};
    });
  }

  /// Registers the API routes (and the static UI when configured).
  void mount(httplib::Server& server) {
    server.set_payload_max_length(options_.max_upload_bytes * 2 + 64 * 1024);
    server.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) { send(res, health()); });
    server.Get("/api/models", [this](const httplib::Request&, httplib::Response& res) { send(res, list_models()); });
    server.Post("/api/convert", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = request_id(req);
      send(res, with_upload(req, id, [&](const std::string& a, const std::string& c) { return convert(a, c, id); }), id);
    });
    server.Post("/api/convert_all", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = request_id(req);
      send(res, with_upload(req, id, [&](const std::string& a, const std::string& c) { return convert_all(a, c, id); }), id);
    });
    if (!options_.static_dir.empty() && std::filesystem::is_directory(options_.static_dir)) {
      server.set_mount_point("/", options_.static_dir);
    } else {
      server.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("s2m service: no web UI is installed; the API lives under /api/\n", "text/plain");
      });
    }
  }

 private:
  class Slot {
   public:
    explicit Slot(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
    ~Slot() { s_.release(); }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

   private:
    std::counting_semaphore<>& s_;
  };

  struct TooLarge : std::runtime_error {
    using std::runtime_error::runtime_error;
  };

  static HttpReply error_reply(int status, const std::string& code, const std::string& message,
                               const std::string& request_id) {
    return {status, "application/json",
            nlohmann::json{{"error", code}, {"message", message}, {"request_id", request_id}}.dump()};
  }

  template <typename F>
  HttpReply guarded(const std::string& request_id, F&& f) {
    try {
      return f();
    } catch (const TooLarge& e) {
      return error_reply(413, "PayloadTooLarge", e.what(), request_id);
    } catch (const Error& e) {
      return error_reply(service_detail::status_for(e.code()), std::string(errc_name(e.code())), e.what(), request_id);
    } catch (const std::exception& e) {
      return error_reply(500, "Internal", e.what(), request_id);
    }
  }

  AudioClip decode_upload(const std::string& audio) const {
    if (audio.empty()) fail(Errc::kInvalidArgument, "missing audio upload");
    if (audio.size() > options_.max_upload_bytes) throw TooLarge("upload of " + std::to_string(audio.size()) + " bytes");
    const WavData wav =
        decode_wav(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(audio.data()), audio.size()));
    if (duration_s(wav) > options_.max_upload_s) {
      throw TooLarge("clip of " + std::to_string(duration_s(wav)) + " s exceeds " + std::to_string(options_.max_upload_s) + " s");
    }
    return to_canonical(wav);
  }

  template <typename F>
  HttpReply with_upload(const httplib::Request& req, const std::string& id, F&& f) {
    if (!req.is_multipart_form_data() || !req.has_file("audio")) {
      return error_reply(400, "InvalidArgument", "expected multipart/form-data with an 'audio' part", id);
    }
    const std::string config = req.has_file("config") ? req.get_file_value("config").content : std::string();
    return f(req.get_file_value("audio").content, config);
  }

  std::string request_id(const httplib::Request& req) {
    if (req.has_header("X-Request-Id")) return req.get_header_value("X-Request-Id");
    return "req-" + service_detail::hex32(static_cast<std::uint32_t>(++counter_)) + "-" +
           service_detail::hex32(static_cast<std::uint32_t>(fresh_seed()));
  }

  std::uint64_t fresh_seed() {
    std::lock_guard<std::mutex> lock(seed_mutex_);
    return seed_rng_() >> 11;  // fits a JSON number without loss
  }

  static void send(httplib::Response& res, const HttpReply& r, const std::string& request_id = {}) {
    res.status = r.status;
    if (!request_id.empty()) res.set_header("X-Request-Id", request_id);
    res.set_content(r.body, r.content_type);
  }

  ModelBundle models_;
  ServiceOptions options_;
  std::counting_semaphore<> slots_;
  std::atomic<std::uint64_t> counter_{0};
  std::mutex seed_mutex_;
  std::mt19937_64 seed_rng_{std::random_device{}()};
};

}  // namespace s2m
