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

#include "service.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

#include "slgan/image.hpp"

// Last: it pulls in <resolv.h>, whose _res macro clashes with Eigen.
#include <httplib.h>

namespace slgan::tools {

using nlohmann::json;

namespace {

class RequestError : public std::runtime_error {
 public:
  RequestError(int status, std::string field, const std::string& what)
      : std::runtime_error(what), status(status), field(std::move(field)) {}
  int status;
  std::string field;
};

HttpResponse json_response(const json& j, int status = 200) { return {status, j.dump(), "application/json"}; }

HttpResponse error_response(int status, const std::string& field, const std::string& message) {
  return json_response(json{{"error", message}, {"field", field}}, status);
}

json parse_body(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw RequestError(400, "body", "request body must be a JSON object");
  return j;
}

ImageTensor decode_image_field(const json& j, const std::string& field) {
  if (!j.contains(field)) throw RequestError(400, field, fmt::format("missing field '{}'", field));
  if (!j[field].is_string()) throw RequestError(400, field, "expected a base64-encoded PNG string");
  try {
    return decode_png(base64_decode(j[field].get<std::string>()));
  } catch (const std::exception& e) {
    throw RequestError(400, field, fmt::format("cannot decode image: {}", e.what()));
  }
}

Eigen::VectorXd decode_params(const json& j, int n) {
  const json& p = j["params"];
  if (!p.is_array()) throw RequestError(400, "params", "expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!p[i].is_number()) throw RequestError(400, "params", fmt::format("params[{}] is not a number", i));
    const double x = p[i].get<double>();
    if (!std::isfinite(x) || std::abs(x) > 1.0)
      throw RequestError(400, "params", fmt::format("params[{}] = {} outside [-1, 1]", i, x));
    v(static_cast<Eigen::Index>(i)) = x;
  }
  if (v.size() != n)
    throw RequestError(422, "params", fmt::format("model expects N = {} parameters, got {}", n, v.size()));
  return v;
}

json vector_json(const Eigen::MatrixXd& m, int row) {
  json a = json::array();
  for (Eigen::Index k = 0; k < m.cols(); ++k) a.push_back(m(row, k));
  return a;
}

HttpResponse guarded(const std::function<HttpResponse()>& fn) {
  try {
    return fn();
  } catch (const RequestError& e) {
    return error_response(e.status, e.field, e.what());
  } catch (const ShapeError& e) {
    return error_response(422, "image", e.what());
  } catch (const std::exception& e) {
    return error_response(500, "", e.what());
  }
}

}  // namespace

extern const char* const kUiPage;

Service::Service(std::shared_ptr<const InferenceModel> model, std::optional<synth::Dataset> dataset)
    : model_(std::move(model)), dataset_(std::move(dataset)) {
  check(model_ != nullptr, "service needs a model");
}

std::shared_ptr<const InferenceModel> Service::snapshot() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return model_;
}

void Service::swap(std::shared_ptr<const InferenceModel> model) {
  check(model != nullptr, "cannot swap in an empty model");
  std::lock_guard<std::mutex> lock(mutex_);
  model_ = std::move(model);
}

void Service::set_source(std::string checkpoint, std::string basis) {
  std::lock_guard<std::mutex> lock(mutex_);
  checkpoint_path_ = std::move(checkpoint);
  basis_path_ = std::move(basis);
}

HttpResponse Service::reload() {
  return guarded([&] {
    std::string ckpt, basis;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      ckpt = checkpoint_path_;
      basis = basis_path_;
    }
    if (ckpt.empty()) throw RequestError(400, "", "service has no checkpoint source to reload");
    // Load fully before swapping, so requests never see a partial model.
    swap(InferenceModel::load(ckpt, basis));
    return info();
  });
}

HttpResponse Service::info() const {
  const auto model = snapshot();
  const auto& basis = model->basis();
  json labels = json::array();
  for (int k = 0; k < model->num_params(); ++k) {
    labels.push_back(k < static_cast<int>(basis.labels.size()) && !basis.labels[k].empty()
                         ? basis.labels[k]
                         : fmt::format("component {}", k));
  }
  nlohmann::ordered_json j;
  j["N"] = model->num_params();
  j["basis_kind"] = basis.basis_kind;
  j["image_size"] = {model->image_size(), model->image_size()};
  j["labels"] = labels;
  j["basis_hash"] = model->meta().basis_hash;
  j["config_hash"] = model->meta().config_hash;
  j["adversarial_mode"] = model->meta().adversarial_mode;
  j["dataset_records"] = dataset_ ? dataset_->size() : 0;
  return {200, j.dump(), "application/json"};
}

HttpResponse Service::edit(const std::string& body) const {
  return guarded([&] {
    const auto model = snapshot();
    const json j = parse_body(body);
    const std::string mode = j.value("mode", std::string("edit"));

    ImageTensor image;
    if (j.contains("dataset_id")) {
      if (!dataset_) throw RequestError(400, "dataset_id", "service was started without a dataset");
      if (!j["dataset_id"].is_number_integer()) throw RequestError(400, "dataset_id", "expected an integer");
      const int id = j["dataset_id"].get<int>();
      if (id < 0 || id >= dataset_->size())
        throw RequestError(400, "dataset_id", fmt::format("record {} outside [0, {})", id, dataset_->size()));
      image = dataset_->images.slice(id);
    } else {
      image = decode_image_field(j, "image");
    }

    EditResult result;
    if (mode == "edit") {
      if (!j.contains("params")) throw RequestError(400, "params", "missing field 'params'");
      result = model->edit(image, ParameterVector(decode_params(j, model->num_params())));
    } else if (mode == "neutralize") {
      result = model->neutralize(image);
    } else if (mode == "transfer") {
      result = model->interpolate(image, decode_image_field(j, "target"), 0.0);
    } else if (mode == "interpolate") {
      if (!j.contains("a") || !j["a"].is_number()) throw RequestError(400, "a", "missing numeric field 'a'");
      const double a = j["a"].get<double>();
      if (!(a >= 0.0 && a <= 1.0)) throw RequestError(400, "a", fmt::format("a = {} outside [0, 1]", a));
      result = model->interpolate(image, decode_image_field(j, "target"), a);
    } else {
      throw RequestError(400, "mode", fmt::format("unknown mode '{}' (edit, transfer, interpolate, neutralize)", mode));
    }

    nlohmann::ordered_json out;
    out["mode"] = mode;
    out["image"] = base64_encode(encode_png(result.image));
    out["p_est"] = vector_json(result.p_est, 0);
    out["resized"] = result.resized;
    return HttpResponse{200, out.dump(), "application/json"};
  });
}

HttpResponse Service::regress(const std::string& body) const {
  return guarded([&] {
    const auto model = snapshot();
    const json j = parse_body(body);
    bool resized = false;
    const ImageTensor image = model->prepare(decode_image_field(j, "image"), &resized);
    if (image.n() != 1) throw RequestError(400, "image", "expected a single image");
    nlohmann::ordered_json out;
    // Clamped to the slider range so the vector can be sent back to /edit.
    const Eigen::MatrixXd p = model->regress(image).cwiseMax(-1.0).cwiseMin(1.0);
    out["params"] = vector_json(p, 0);
    out["basis_kind"] = model->basis().basis_kind;
    out["resized"] = resized;
    return HttpResponse{200, out.dump(), "application/json"};
  });
}

HttpResponse Service::ui() const { return {200, kUiPage, "text/html; charset=utf-8"}; }

// --- HTTP transport -----------------------------------------------------------

struct HttpServer::Impl {
  httplib::Server server;
};

namespace {

void reply(httplib::Response& res, const HttpResponse& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

}  // namespace

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>()) {
  auto& s = impl_->server;
  s.Get("/model/info", [&service](const httplib::Request&, httplib::Response& res) { reply(res, service.info()); });
  s.Post("/edit", [&service](const httplib::Request& req, httplib::Response& res) { reply(res, service.edit(req.body)); });
  s.Post("/regress",
         [&service](const httplib::Request& req, httplib::Response& res) { reply(res, service.regress(req.body)); });
  s.Post("/model/reload", [&service](const httplib::Request&, httplib::Response& res) { reply(res, service.reload()); });
  s.Get("/ui", [&service](const httplib::Request&, httplib::Response& res) { reply(res, service.ui()); });
  s.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_redirect("/ui"); });
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  check<IoError>(bound > 0, "cannot bind {}:{}", host, port);
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace slgan::tools
