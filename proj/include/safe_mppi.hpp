// Copyright 2026 The safe_mppi Authors.
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

#include "safe_mppi/cbf.hpp"
#include "safe_mppi/dual.hpp"
#include "safe_mppi/dynamics.hpp"
#include "safe_mppi/errors.hpp"
#include "safe_mppi/estimation.hpp"
#include "safe_mppi/experiments.hpp"
#include "safe_mppi/mppi.hpp"
#include "safe_mppi/plot.hpp"
#include "safe_mppi/qp.hpp"
#include "safe_mppi/random.hpp"
#include "safe_mppi/reach_avoid.hpp"
#include "safe_mppi/scenario_io.hpp"
#include "safe_mppi/simkit.hpp"
