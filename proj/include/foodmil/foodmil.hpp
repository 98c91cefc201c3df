// Copyright 2026 The foodmil Authors
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

#include "foodmil/checkpoint.hpp"
#include "foodmil/error.hpp"
#include "foodmil/fusion.hpp"
#include "foodmil/geodata.hpp"
#include "foodmil/geometry.hpp"
#include "foodmil/interpret.hpp"
#include "foodmil/linalg.hpp"
#include "foodmil/metrics.hpp"
#include "foodmil/mil.hpp"
#include "foodmil/split.hpp"
#include "foodmil/synth.hpp"
#include "foodmil/trainer.hpp"
#include "foodmil/types.hpp"
