// Copyright 2026 The slgan Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "cli.hpp"
#include "doctest.h"
#include "service.hpp"
#include "slgan/evaluator.hpp"
#include "slgan/image.hpp"
#include "toy_data.hpp"

// Last: it pulls in <resolv.h>, whose _res macro clashes with Eigen.
#include <httplib.h>

using namespace slgan;
using namespace slgan::tools;
using nlohmann::json;
using slgan::testing::TempDir;
using slgan::testing::ToyData;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

/// Toy dataset plus an untrained checkpoint on disk.
struct ModelFixture {
  ModelFixture() : toy("tools") {
    checkpoint = toy.dir.file("model.slgan");
    toy.fresh_bundle().save(checkpoint);
    model = InferenceModel::load(checkpoint, toy.basis_path);
    image_path = toy.dir.file("data/" + toy.data.manifest.records[3].image);
  }
  std::vector<std::string> model_args() const { return {"--checkpoint", checkpoint, "--basis", toy.basis_path}; }
  std::string image_b64(int record) const { return base64_encode(encode_png(toy.data.images.slice(record))); }

  ToyData toy;
  std::string checkpoint, image_path;
  std::shared_ptr<const InferenceModel> model;
};

ModelFixture& fixture() {
  static ModelFixture f;
  return f;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  auto& f = fixture();
  auto r = cli(concat(concat({"edit"}, f.model_args()), {"--input", f.image_path, "--output", "x.png", "--bogus"}));
  CHECK(r.code == 2);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"eval", "--mode", "nonsense"}).code == 2);
  const auto help = cli({"--help"});
  CHECK(help.code == 0);
  for (const char* sub : {"build-basis", "gen-data", "train", "edit", "transfer", "eval", "serve"})
    CHECK(help.out.find(sub) != std::string::npos);
  CHECK(cli({"edit", "--checkpoint", "/nonexistent", "--basis", "/nonexistent", "--input", "x", "--output", "y"}).code ==
        1);
}

TEST_CASE("pipeline through the command line") {
  TempDir dir("cli-pipeline");
  const auto data = dir.file("data");
  REQUIRE(cli({"gen-data", "--out", data, "--identities", "4", "--per-identity", "8", "--size", "32", "--params", "4"})
              .code == 0);
  REQUIRE(cli({"build-basis", "--dataset", data + "/manifest.jsonl", "--out", dir.file("basis.slgan"),
               "--synthetic-modes"})
              .code == 0);
  const auto sparse = cli({"build-basis", "--dataset", data + "/manifest.jsonl", "--out", dir.file("sparse.slgan"),
                           "--components", "4", "--max-iters", "50"});
  CHECK(sparse.code == 0);
  CHECK(load_basis(dir.file("sparse.slgan")).dataset_hash == synth::Manifest::load(data + "/manifest.jsonl").hash());

  std::ofstream(dir.file("train.toml")) << "preset = \"tiny\"\nbatch_size = 4\nepochs_paired = 1\nepochs_unpaired = 0\n"
                                           "dataset = \"data/manifest.jsonl\"\nbasis = \"basis.slgan\"\n";
  const auto run = cli({"train", "--config", dir.file("train.toml"), "--out", dir.file("run")});
  CHECK(run.code == 0);
  CHECK(std::filesystem::exists(dir.file("run/checkpoint.slgan")));
  CHECK(std::filesystem::exists(dir.file("run/metrics.jsonl")));

  // A config naming another dataset's basis is refused.
  std::ofstream(dir.file("bad.toml")) << "preset = \"tiny\"\nbatch_size = 4\ndataset = \"data/manifest.jsonl\"\n"
                                         "basis = \"" << fixture().toy.basis_path << "\"\n";
  const auto bad = cli({"train", "--config", dir.file("bad.toml"), "--out", dir.file("bad")});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("basis") != std::string::npos);
}

TEST_CASE("edit with all-zero parameters neutralizes, same bytes as the library and the service") {
  auto& f = fixture();
  TempDir dir("cli-edit");
  const auto out = dir.file("neutral.png");
  REQUIRE(cli(concat(concat({"edit"}, f.model_args()), {"--input", f.image_path, "--output", out, "--params", "all-zero"}))
              .code == 0);
  const ImageTensor input = read_png(f.image_path);
  const auto lib = encode_png(f.model->neutralize(input).image);
  CHECK(bytes_of(read_file(out)) == lib);

  Service service(f.model);
  json req{{"image", base64_encode(encode_png(input))}, {"params", std::vector<double>(4, 0.0)}};
  const auto edit = service.edit(req.dump());
  REQUIRE(edit.status == 200);
  CHECK(base64_decode(json::parse(edit.body)["image"].get<std::string>()) == lib);
  req = {{"image", base64_encode(encode_png(input))}, {"mode", "neutralize"}};
  CHECK(json::parse(service.edit(req.dump()).body)["image"] == json::parse(edit.body)["image"]);
}

TEST_CASE("single sliders and sweeps") {
  auto& f = fixture();
  TempDir dir("cli-sweep");
  const auto sweep = cli(concat(concat({"edit"}, f.model_args()),
                                {"--input", f.image_path, "--sweep", "0", "--steps", "11", "--out-dir", dir.file("s")}));
  REQUIRE(sweep.code == 0);
  const ImageTensor input = read_png(f.image_path);
  for (int i = 0; i < 11; ++i) {
    const double v = -1.0 + 0.2 * i;
    CHECK(sweep.out.find(fmt::format("sweep_{:04d}.png {:.2f}", i, v)) != std::string::npos);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(4);
    p(0) = -1.0 + 2.0 * i / 10;
    CHECK(bytes_of(read_file(dir.file(fmt::format("s/sweep_{:04d}.png", i)))) ==
          encode_png(f.model->edit(input, ParameterVector(p)).image));
  }
  CHECK(std::filesystem::exists(dir.file("s/sweep_strip.png")));

  // --param starts from the input's regressed vector; labels work as keys.
  const std::string label = f.model->basis().labels.at(2);
  const auto one = cli(concat(concat({"edit"}, f.model_args()),
                              {"--input", f.image_path, "--output", dir.file("one.png"), "--param", label + "=0.7"}));
  REQUIRE(one.code == 0);
  Eigen::VectorXd p = f.model->regress(input).row(0).transpose();
  p(2) = 0.7;
  CHECK(bytes_of(read_file(dir.file("one.png"))) == encode_png(f.model->edit(input, ParameterVector(p)).image));
  CHECK(cli(concat(concat({"edit"}, f.model_args()),
                   {"--input", f.image_path, "--output", dir.file("x.png"), "--param", "9=0.1"}))
            .code == 1);
}

TEST_CASE("transfer and parameter tracks") {
  auto& f = fixture();
  TempDir dir("cli-transfer");
  const auto target = f.toy.dir.file("data/" + f.toy.data.manifest.records[12].image);
  REQUIRE(cli(concat(concat({"transfer"}, f.model_args()), {"--source", f.image_path, "--target", target, "--output",
                                                             dir.file("t.png"), "--strip", dir.file("strip.png")}))
              .code == 0);
  const ImageTensor src = read_png(f.image_path), trg = read_png(target);
  CHECK(bytes_of(read_file(dir.file("t.png"))) == encode_png(f.model->edit(src, f.model->regress(trg)).image));

  std::ofstream(dir.file("track.txt")) << "# frames\n0, 0, 0, 0\n0.5, -0.5, 0.25, 1\n1 1 1 1\n";
  const auto r = cli(concat(concat({"transfer"}, f.model_args()),
                            {"--source", f.image_path, "--param-track", dir.file("track.txt"), "--out-dir", dir.file("f")}));
  REQUIRE(r.code == 0);
  Eigen::VectorXd p(4);
  p << 0.5, -0.5, 0.25, 1;
  CHECK(bytes_of(read_file(dir.file("f/frame_0001.png"))) == encode_png(f.model->edit(src, ParameterVector(p)).image));
  CHECK(std::filesystem::exists(dir.file("f/frame_0002.png")));
}

TEST_CASE("eval reports equal the library on the same seed") {
  auto& f = fixture();
  const auto& data = f.toy.data;
  const auto r = cli(concat(concat({"eval"}, f.model_args()),
                            {"--dataset", f.toy.manifest_path, "--mode", "consistency", "--samples", "12", "--seed", "7"}));
  REQUIRE(r.code == 0);
  const auto lib = eval::regression_error_report(*f.model, data.images.slice(0, 12), data.params.topRows(12),
                                                 eval::RegressionMode::kConsistency, 7);
  CHECK(r.out == lib.to_json() + "\n");
  CHECK(json::parse(r.out)["metrics"].contains("consistency_relative_error"));

  const auto t = cli(concat(concat({"eval"}, f.model_args()),
                            {"--dataset", f.toy.manifest_path, "--mode", "transfer", "--samples", "5"}));
  REQUIRE(t.code == 0);
  CHECK(t.out == eval::transfer_harness(*f.model, data, eval::choose_pairs(data, 5, 1)).report.to_json() + "\n");
  CHECK(cli(concat(concat({"eval"}, f.model_args()), {"--dataset", f.toy.manifest_path, "--mode", "neutralize"})).code ==
        0);
}

TEST_CASE("environment variables supply paths") {
  auto& f = fixture();
  TempDir dir("cli-env");
  setenv("SLGAN_CHECKPOINT", f.checkpoint.c_str(), 1);
  setenv("SLGAN_BASIS", f.toy.basis_path.c_str(), 1);
  const auto r = cli({"edit", "--input", f.image_path, "--output", dir.file("e.png"), "--params", "all-zero"});
  unsetenv("SLGAN_CHECKPOINT");
  unsetenv("SLGAN_BASIS");
  CHECK(r.code == 0);
  CHECK(std::filesystem::exists(dir.file("e.png")));
}

TEST_CASE("service handlers") {
  auto& f = fixture();
  Service service(f.model, f.toy.data);
  const int N = f.model->num_params();

  SUBCASE("model info") {
    const auto info = json::parse(service.info().body);
    CHECK(info["N"] == f.toy.basis.num_components());
    CHECK(info["labels"].size() == static_cast<std::size_t>(N));
    CHECK(info["image_size"][0] == 32);
    CHECK(info["basis_kind"] == "expression");
  }

  SUBCASE("malformed requests") {
    auto check_error = [&](const HttpResponse& r, int status, const std::string& field) {
      CHECK(r.status == status);
      CHECK(json::parse(r.body)["field"] == field);
    };
    check_error(service.edit("not json"), 400, "body");
    check_error(service.edit(R"({"params": [0, 0, 0, 0]})"), 400, "image");
    check_error(service.edit(json{{"image", "%%%"}, {"params", {0, 0, 0, 0}}}.dump()), 400, "image");
    const std::string img = f.image_b64(3);
    check_error(service.edit(json{{"image", img}, {"params", {0, 0, 0}}}.dump()), 422, "params");
    check_error(service.edit(json{{"image", img}, {"params", {0, 0, "x", 0}}}.dump()), 400, "params");
    check_error(service.edit(json{{"image", img}, {"params", {0, 0, 2, 0}}}.dump()), 400, "params");
    check_error(service.edit(json{{"image", img}, {"params", {0, 0, 0, 0}}, {"mode", "warp"}}.dump()), 400, "mode");
    check_error(service.edit(json{{"image", img}, {"mode", "interpolate"}, {"target", img}, {"a", 1.5}}.dump()), 400,
                "a");
    check_error(service.edit(json{{"image", img}, {"mode", "transfer"}}.dump()), 400, "target");
    check_error(service.edit(json{{"dataset_id", 9999}, {"mode", "neutralize"}}.dump()), 400, "dataset_id");
    check_error(service.regress("[]"), 400, "body");
  }

  SUBCASE("responses are deterministic and match the library") {
    const std::string img = f.image_b64(3), trg = f.image_b64(20);
    const json req{{"image", img}, {"params", {0.1, -0.2, 0.3, -0.4}}};
    const auto a = service.edit(req.dump()), b = service.edit(req.dump());
    REQUIRE(a.status == 200);
    CHECK(a.body == b.body);
    const ImageTensor src = decode_png(base64_decode(img)), target = decode_png(base64_decode(trg));
    const json t = json::parse(service.edit(json{{"image", img}, {"mode", "transfer"}, {"target", trg}}.dump()).body);
    CHECK(base64_decode(t["image"].get<std::string>()) == encode_png(f.model->interpolate(src, target, 0.0).image));
    const json half =
        json::parse(service.edit(json{{"image", img}, {"mode", "interpolate"}, {"target", trg}, {"a", 0.5}}.dump()).body);
    CHECK(base64_decode(half["image"].get<std::string>()) == encode_png(f.model->interpolate(src, target, 0.5).image));
    const json by_id = json::parse(service.edit(json{{"dataset_id", 3}, {"mode", "neutralize"}}.dump()).body);
    CHECK(base64_decode(by_id["image"].get<std::string>()) ==
          encode_png(f.model->neutralize(f.toy.data.images.slice(3)).image));
  }

  SUBCASE("regress then edit reconstructs as the evaluator's self transfer") {
    for (int record : eval::expressive_records(f.toy.data, 3)) {
      const ImageTensor input = f.toy.data.images.slice(record);
      const json reg = json::parse(service.regress(json{{"image", f.image_b64(record)}}.dump()).body);
      const std::vector<double> p = reg["params"];
      const Eigen::VectorXd lib = f.model->regress(input).row(0).transpose();
      REQUIRE(lib.cwiseAbs().maxCoeff() <= 1.0);  // no clamping for this model
      const auto res = service.edit(json{{"image", f.image_b64(record)}, {"params", p}}.dump());
      REQUIRE(res.status == 200);
      const auto png = base64_decode(json::parse(res.body)["image"].get<std::string>());
      const EditResult direct = f.model->edit(input, ParameterVector(lib));
      CHECK(png == encode_png(direct.image));
      // sqrt(IED) is a norm, so the 8-bit rounding of the response can add at
      // most its own norm to the evaluator's reconstruction distance.
      const ImageTensor out = decode_png(png);
      const ImageTensor gt =
          eval::ground_truth_render(f.toy.data.manifest, record, f.toy.data.params.row(record).transpose());
      const double bound = std::sqrt(eval::self_transfer_ied(*f.model, f.toy.data, record)) +
                           std::sqrt(eval::image_euclidean_distance(out, direct.image));
      CHECK(std::sqrt(eval::image_euclidean_distance(out, gt)) <= bound + 1e-9);
    }
  }

  SUBCASE("resized inputs are flagged") {
    const ImageTensor big = resize_bilinear(f.toy.data.images.slice(0), 48, 48);
    const json r = json::parse(service.regress(json{{"image", base64_encode(encode_png(big))}}.dump()).body);
    CHECK(r["resized"] == true);
    CHECK(r["params"].size() == static_cast<std::size_t>(N));
  }

  SUBCASE("hot swap replaces the snapshot between requests") {
    auto before = service.snapshot();
    CheckpointBundle other = f.toy.fresh_bundle(99);
    other.meta.config_hash = "other";
    service.swap(std::make_shared<const InferenceModel>(std::move(other), f.toy.basis));
    CHECK(json::parse(service.info().body)["config_hash"] == "other");
    CHECK(before->meta().config_hash != "other");  // in-flight holders keep their model
    service.set_source(f.checkpoint, f.toy.basis_path);
    CHECK(service.reload().status == 200);
    CHECK(json::parse(service.info().body)["config_hash"] == f.model->meta().config_hash);
  }
}

TEST_CASE("http transport") {
  auto& f = fixture();
  Service service(f.model);
  HttpServer server(service);
  const int port = server.bind("127.0.0.1", 0);
  std::thread thread([&] { server.listen(); });
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(30, 0);

  const auto info = client.Get("/model/info");
  REQUIRE(info);
  CHECK(info->status == 200);
  CHECK(json::parse(info->body)["N"] == f.model->num_params());

  const auto ui = client.Get("/ui");
  REQUIRE(ui);
  CHECK(ui->status == 200);
  CHECK(ui->body.find("/model/info") != std::string::npos);

  const std::string body = json{{"image", f.image_b64(5)}, {"params", {0.0, 0.5, 0.0, -0.5}}}.dump();
  const auto edit = client.Post("/edit", body, "application/json");
  REQUIRE(edit);
  CHECK(edit->status == 200);
  CHECK(edit->body == service.edit(body).body);

  std::vector<std::string> bodies(4);
  std::vector<std::thread> workers;
  for (int i = 0; i < 4; ++i)
    workers.emplace_back([&, i] {
      httplib::Client c("127.0.0.1", port);
      if (auto r = c.Post("/edit", body, "application/json")) bodies[i] = r->body;
    });
  for (auto& w : workers) w.join();
  for (const auto& b : bodies) CHECK(b == edit->body);

  const auto bad = client.Post("/regress", "{", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  const auto wrong_n = client.Post("/edit", json{{"image", f.image_b64(5)}, {"params", {0.0}}}.dump(), "application/json");
  REQUIRE(wrong_n);
  CHECK(wrong_n->status == 422);

  server.stop();
  thread.join();
}
