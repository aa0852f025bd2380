// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "syncsde/config.hpp"
#include "syncsde/coupling.hpp"
#include "syncsde/error.hpp"
#include "syncsde/grid.hpp"
#include "syncsde/masks.hpp"
#include "syncsde/metrics.hpp"
#include "syncsde/protocol.hpp"
#include "syncsde/remote.hpp"
#include "syncsde/rng.hpp"
#include "syncsde/runner.hpp"
#include "syncsde/schedule.hpp"
#include "syncsde/score.hpp"
#include "syncsde/tasks.hpp"
#include "syncsde/tensor_io.hpp"
#include "syncsde/views.hpp"
