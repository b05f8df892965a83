// Copyright 2026 The crag Authors
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

#pragma once

#include <functional>
#include <string>
#include <utility>

#include "crag/error.hpp"

namespace crag {

/// External text-generation service. Implementations must be safe to call
/// from several threads at once.
class GenerationClient {
 public:
  virtual ~GenerationClient() = default;
  virtual std::string generate(const std::string& prompt, int max_tokens) const = 0;
};

/// Returns the prompt unchanged.
class EchoClient final : public GenerationClient {
 public:
  std::string generate(const std::string& prompt, int) const override { return prompt; }
};

/// Always returns the same text.
class FixedAnswerClient final : public GenerationClient {
 public:
  explicit FixedAnswerClient(std::string answer) : answer_(std::move(answer)) {}
  std::string generate(const std::string&, int) const override { return answer_; }

 private:
  std::string answer_;
};

/// Delegates to an arbitrary function of the prompt.
class ScriptedClient final : public GenerationClient {
 public:
  explicit ScriptedClient(std::function<std::string(const std::string&)> fn) : fn_(std::move(fn)) {}
  std::string generate(const std::string& prompt, int) const override { return fn_(prompt); }

 private:
  std::function<std::string(const std::string&)> fn_;
};

/// Always fails, for exercising error paths.
class FailingClient final : public GenerationClient {
 public:
  std::string generate(const std::string&, int) const override {
    throw TransportError("generation service unavailable", 1);
  }
};

}  // namespace crag
