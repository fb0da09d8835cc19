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

#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "s2m/archive.hpp"
#include "s2m/midi.hpp"
#include "s2m/service.hpp"
#include "support/fixtures.hpp"

namespace s2m {
namespace {

using nlohmann::json;

std::string as_string(const std::vector<std::uint8_t>& b) { return {b.begin(), b.end()}; }

std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

class ServiceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    speech_ = new std::string(as_string(write_wav(fixture::speech_like(2.0))));
    silence_ = new std::string(as_string(write_wav(fixture::silence(1.0))));
  }
  static void TearDownTestSuite() {
    delete speech_;
    delete silence_;
  }

  Service service_{fixture::seeded_bundle(), {}};
  static std::string* speech_;
  static std::string* silence_;
};

std::string* ServiceTest::speech_ = nullptr;
std::string* ServiceTest::silence_ = nullptr;

TEST(Base64, RoundTrip) {
  for (std::size_t n = 0; n < 40; ++n) {
    std::vector<std::uint8_t> b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>(i * 37 + 5);
    EXPECT_EQ(base64_decode(base64_encode(b)), b);
  }
  EXPECT_EQ(base64_encode(as_bytes("Man")), "TWFu");
  EXPECT_EQ(base64_encode(as_bytes("Ma")), "TWE=");
  EXPECT_THROW(base64_decode("T#=="), Error);
}

TEST(Zip, StoredEntriesRoundTrip) {
  ZipWriter z;
  z.add("a.txt", std::string_view("hello"));
  z.add("dir/b.bin", std::vector<std::uint8_t>{0, 1, 2, 255});
  const std::vector<std::uint8_t> bytes = z.finish();
  const auto entries = read_stored_zip(bytes);
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].first, "a.txt");
  EXPECT_EQ(as_string(entries[0].second), "hello");
  EXPECT_EQ(entries[1].second, (std::vector<std::uint8_t>{0, 1, 2, 255}));
  std::vector<std::uint8_t> bad = bytes;
  bad[30 + 5] ^= 1;  // first byte of the first payload
  EXPECT_THROW(read_stored_zip(bad), Error);
}

TEST(ParseConfig, DefaultsAndValidation) {
  const ConvertConfig d = parse_config("", 17);
  EXPECT_EQ(d.model, Task::kGapFill);
  EXPECT_EQ(d.contour, TrackKind::kF0);
  EXPECT_EQ(d.sparsify.level, SparsifyLevel::kMedium);
  EXPECT_EQ(d.seed, 17u);
  const ConvertConfig c = parse_config(R"({"model":"denoise","contour":"f2","seed":5,"temperature":0})", 1);
  EXPECT_EQ(c.model, Task::kDenoise);
  EXPECT_EQ(c.contour, TrackKind::kF2);
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.temperature, 0.0);
  for (const char* bad : {"{", "[]", R"({"model":"big"})", R"({"seed":-1})", R"({"level":3})", R"({"temperature":"hot"})"}) {
    try {
      parse_config(bad, 1);
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::kInvalidArgument) << bad;
    }
  }
}

TEST_F(ServiceTest, HealthAndModels) {
  const json h = json::parse(service_.health().body);
  EXPECT_EQ(h["status"], "ok");
  EXPECT_TRUE(h["checkpoints"].contains("gapfill"));
  const json m = json::parse(service_.list_models().body);
  ASSERT_EQ(m["models"].size(), 2u);
  EXPECT_EQ(m["models"][0]["variant"], "gapfill");
  EXPECT_EQ(m["models"][1]["variant"], "denoise");
}

TEST_F(ServiceTest, ConvertDenoise) {
  const HttpReply r = service_.convert(*speech_, R"({"model":"denoise"})", "t1");
  ASSERT_EQ(r.status, 200) << r.body;
  const json j = json::parse(r.body);
  EXPECT_EQ(j["request_id"], "t1");
  EXPECT_EQ(j["artifacts"].size(), 2u);
  for (const char* k : {"raw", "generated"}) EXPECT_NO_THROW(read_midi(base64_decode(j["artifacts"][k].get<std::string>())));
  EXPECT_NEAR(j["duration_s"].get<double>(), 2.0, 1e-9);
  EXPECT_TRUE(j["config"]["seed"].is_number_unsigned());
}

TEST_F(ServiceTest, ConvertGapFillAddsSparseAndIsSeeded) {
  const std::string cfg = R"({"model":"gapfill","technique":"heuristic","level":"high","seed":9})";
  const HttpReply a = service_.convert(*speech_, cfg, "a");
  const HttpReply b = service_.convert(*speech_, cfg, "b");
  ASSERT_EQ(a.status, 200) << a.body;
  const json ja = json::parse(a.body), jb = json::parse(b.body);
  EXPECT_TRUE(ja["artifacts"].contains("sparse"));
  EXPECT_EQ(ja["artifacts"], jb["artifacts"]);
  EXPECT_EQ(ja["config"]["seed"], 9);
}

TEST_F(ServiceTest, ErrorStatuses) {
  EXPECT_EQ(service_.convert("not a wav file at all", "{}", "x").status, 422);
  EXPECT_EQ(service_.convert(*speech_, R"({"model":"nope"})", "x").status, 400);
  EXPECT_EQ(service_.convert("", "{}", "x").status, 400);
  const std::string short_clip = as_string(write_wav(fixture::silence(0.3)));
  const HttpReply s = service_.convert(short_clip, "{}", "x");
  EXPECT_EQ(s.status, 400);
  EXPECT_EQ(json::parse(s.body)["error"], "ClipTooShort");
  const std::string long_clip = as_string(write_wav(fixture::silence(45.0)));
  EXPECT_EQ(service_.convert(long_clip, "{}", "x").status, 413);
  const HttpReply e = service_.convert_all("garbage", "{}", "rid");
  EXPECT_EQ(e.status, 422);
  EXPECT_EQ(json::parse(e.body)["request_id"], "rid");
}

TEST_F(ServiceTest, MissingCheckpoint) {
  ModelBundle only_gap;
  only_gap.gapfill = fixture::seeded_bundle().gapfill;
  Service s(std::move(only_gap), {});
  const json m = json::parse(s.list_models().body);
  ASSERT_EQ(m["models"].size(), 1u);
  EXPECT_EQ(m["models"][0]["variant"], "gapfill");
  const HttpReply r = s.convert(*speech_, R"({"model":"denoise"})", "x");
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(json::parse(r.body)["error"], "MissingCheckpoint");

  // convert_all reports the missing variant per entry
  const HttpReply all = s.convert_all(*speech_, "{}", "y");
  ASSERT_EQ(all.status, 207);
  const json p = json::parse(all.body);
  int failed = 0;
  for (const auto& e : p["entries"]) failed += e["status"] == "error" ? 1 : 0;
  EXPECT_EQ(failed, 4);
  const auto entries = read_stored_zip(base64_decode(p["archive"].get<std::string>()));
  EXPECT_EQ(entries.back().first, "manifest.json");
}

TEST_F(ServiceTest, ConvertAllEnumeratesEveryConfiguration) {
  const HttpReply r = service_.convert_all(*speech_, R"({"seed":1})", "z");
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.content_type, "application/zip");
  std::set<std::string> names;
  for (const auto& [name, bytes] : read_stored_zip(as_bytes(r.body))) names.insert(name);
  std::size_t generated = 0;
  for (const auto& n : names) generated += n.rfind("generated/", 0) == 0 ? 1 : 0;
  EXPECT_EQ(generated, 28u);
  EXPECT_EQ(names.size(), 28u + 4u + 24u + 1u);
  EXPECT_TRUE(names.count("generated/gapfill_f3_syllable_high.mid"));
  EXPECT_TRUE(names.count("generated/denoise_f1.mid"));
  EXPECT_TRUE(names.count("sparse/f0_heuristic_low.mid"));
  EXPECT_TRUE(names.count("raw/f2.mid"));
}

TEST_F(ServiceTest, ConvertAllOnSilence) {
  const HttpReply r = service_.convert_all(*silence_, "{}", "s");
  ASSERT_EQ(r.status, 200);
  for (const auto& [name, bytes] : read_stored_zip(as_bytes(r.body))) {
    if (name == "manifest.json") continue;
    EXPECT_TRUE(read_midi(bytes).empty()) << name;
  }
}

TEST_F(ServiceTest, HttpRoutes) {
  httplib::Server server;
  service_.mount(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread loop([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);

  auto root = client.Get("/");
  ASSERT_TRUE(root);
  EXPECT_EQ(root->status, 200);
  auto health = client.Get("/api/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(json::parse(health->body)["version"], kVersion);

  httplib::MultipartFormDataItems items = {{"audio", *speech_, "a.wav", "audio/wav"},
                                           {"config", R"({"model":"denoise","seed":3})", "", "application/json"}};
  httplib::Headers headers = {{"X-Request-Id", "abc"}};
  auto conv = client.Post("/api/convert", headers, items);
  ASSERT_TRUE(conv);
  EXPECT_EQ(conv->status, 200);
  EXPECT_EQ(json::parse(conv->body)["request_id"], "abc");
  EXPECT_EQ(conv->get_header_value("X-Request-Id"), "abc");

  auto no_audio = client.Post("/api/convert", "{}", "application/json");
  ASSERT_TRUE(no_audio);
  EXPECT_EQ(no_audio->status, 400);
  const std::string id = no_audio->get_header_value("X-Request-Id");
  EXPECT_FALSE(id.empty());
  EXPECT_EQ(json::parse(no_audio->body)["request_id"], id);

  server.stop();
  loop.join();
}

TEST(StaticUi, ServedWhenConfigured) {
  const auto dir = std::filesystem::temp_directory_path() / "s2m_static_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "index.html") << "<html>ui</html>";
  }
  ServiceOptions opt;
  opt.static_dir = dir.string();
  Service service(fixture::seeded_bundle(), opt);
  httplib::Server server;
  service.mount(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread loop([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);
  auto page = client.Get("/index.html");
  ASSERT_TRUE(page);
  EXPECT_EQ(page->body, "<html>ui</html>");
  server.stop();
  loop.join();
  std::filesystem::remove_all(dir);
}

TEST(LoadBundle, ReadsCheckpointsFromDirectory) {
  const auto dir = std::filesystem::temp_directory_path() / "s2m_bundle_test";
  std::filesystem::create_directories(dir);
  nn::save_checkpoint((dir / "gapfill.ckpt").string(), nn::fresh_state<float>(desk_preset(Task::kGapFill), 1));
  ModelBundle b = load_bundle(dir.string());
  EXPECT_TRUE(b.gapfill.has_value());
  EXPECT_FALSE(b.denoise.has_value());
  nn::save_checkpoint((dir / "denoise.ckpt").string(), nn::fresh_state<float>(desk_preset(Task::kGapFill), 1));
  EXPECT_THROW(load_bundle(dir.string()), Error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace s2m
