//
// ttnet.hpp
//
// Copyright 2026 The ttnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#pragma once

#include "ttnet/bytes.hpp"
#include "ttnet/clocksim.hpp"
#include "ttnet/codec.hpp"
#include "ttnet/coincidence.hpp"
#include "ttnet/error.hpp"
#include "ttnet/measureplane.hpp"
#include "ttnet/pipeline.hpp"
#include "ttnet/random.hpp"
#include "ttnet/report.hpp"
#include "ttnet/timebase.hpp"
#include "ttnet/transport.hpp"
#include "ttnet/ttagent.hpp"
#include "ttnet/ttraw.hpp"
