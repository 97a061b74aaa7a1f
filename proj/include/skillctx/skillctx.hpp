/*
Copyright 2026 The skillctx Authors. All rights reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#pragma once

// Umbrella header.
#include <skillctx/baselines.hpp>
#include <skillctx/budget.hpp>
#include <skillctx/domain.hpp>
#include <skillctx/embed.hpp>
#include <skillctx/harness.hpp>
#include <skillctx/io.hpp>
#include <skillctx/librarian.hpp>
#include <skillctx/planner.hpp>
#include <skillctx/renderer.hpp>
#include <skillctx/simworld.hpp>
#include <skillctx/stats.hpp>
#include <skillctx/text.hpp>
