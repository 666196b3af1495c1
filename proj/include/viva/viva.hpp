// Copyright 2026 The viva-cbt Authors.
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

#include "viva/option_label.hpp"
#include "viva/exam_types.hpp"
#include "viva/text.hpp"
#include "viva/question_bank.hpp"
#include "viva/normalizer.hpp"
#include "viva/exam_engine.hpp"
#include "viva/evaluation.hpp"
#include "viva/session_log.hpp"
#include "viva/service.hpp"
