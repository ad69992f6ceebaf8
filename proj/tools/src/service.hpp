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

#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "slgan/inference.hpp"
#include "slgan/synth.hpp"

namespace slgan::tools {

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Request handlers of the inference service, independent of the transport.
/// Every request works on one immutable model snapshot; `swap` replaces the
/// snapshot for subsequent requests only.
class Service {
 public:
  explicit Service(std::shared_ptr<const InferenceModel> model, std::optional<synth::Dataset> dataset = std::nullopt);

  HttpResponse info() const;
  HttpResponse edit(const std::string& body) const;
  HttpResponse regress(const std::string& body) const;
  HttpResponse ui() const;

  std::shared_ptr<const InferenceModel> snapshot() const;
  void swap(std::shared_ptr<const InferenceModel> model);

  /// Paths reloaded by `reload`, normally the ones the service started from.
  void set_source(std::string checkpoint, std::string basis);
  HttpResponse reload();

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const InferenceModel> model_;
  std::optional<synth::Dataset> dataset_;
  std::string checkpoint_path_, basis_path_;
};

/// Serves GET /model/info, POST /edit, POST /regress, POST /model/reload and
/// GET /ui until `stop` is called.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds to `port` (0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks until stopped.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace slgan::tools
