//
// Copyright 2026 The privar Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//


// Umbrella header. The HTTP binding lives in privar/http_server.hpp and is
// not included here.

#pragma once

#include "privar/attack.hpp"
#include "privar/error.hpp"
#include "privar/geo.hpp"
#include "privar/ingest.hpp"
#include "privar/lambert_w.hpp"
#include "privar/mechanisms.hpp"
#include "privar/metrics.hpp"
#include "privar/objects.hpp"
#include "privar/rng.hpp"
#include "privar/service.hpp"
#include "privar/session.hpp"
