// Copyright 2026 The VLTinT-Desk Authors.
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

#include "vltint/data.hpp"
#include "vltint/decoder.hpp"
#include "vltint/encoder.hpp"
#include "vltint/errors.hpp"
#include "vltint/gradcheck.hpp"
#include "vltint/metrics.hpp"
#include "vltint/model.hpp"
#include "vltint/nn.hpp"
#include "vltint/objectives.hpp"
#include "vltint/special_tokens.hpp"
#include "vltint/tensor.hpp"
#include "vltint/training.hpp"
