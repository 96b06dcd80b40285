// Copyright 2026 The orbitmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orbitmoe/analysis.hpp"
#include "orbitmoe/assignment.hpp"
#include "orbitmoe/channel.hpp"
#include "orbitmoe/cli.hpp"
#include "orbitmoe/common.hpp"
#include "orbitmoe/config.hpp"
#include "orbitmoe/data.hpp"
#include "orbitmoe/experiment.hpp"
#include "orbitmoe/federation.hpp"
#include "orbitmoe/lowrank.hpp"
#include "orbitmoe/moe.hpp"
#include "orbitmoe/report.hpp"
#include "orbitmoe/split.hpp"
