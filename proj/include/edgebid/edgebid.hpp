// Copyright 2026 The edgebid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "edgebid/baselines.hpp"
#include "edgebid/env_core.hpp"
#include "edgebid/error.hpp"
#include "edgebid/harness.hpp"
#include "edgebid/maddpg.hpp"
#include "edgebid/random.hpp"
#include "edgebid/rollout.hpp"
#include "edgebid/surrogate.hpp"
#include "edgebid/tensor_core.hpp"
