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

// Umbrella header for the core library (everything except the HTTP clients
// and CLI command layer, which pull in the networking dependency).

#include "crag/bench.hpp"
#include "crag/clustering.hpp"
#include "crag/corpus.hpp"
#include "crag/embedding.hpp"
#include "crag/error.hpp"
#include "crag/generation.hpp"
#include "crag/pipeline.hpp"
#include "crag/routing.hpp"
#include "crag/store.hpp"
#include "crag/synthetic.hpp"
