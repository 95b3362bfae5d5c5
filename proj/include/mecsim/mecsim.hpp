#pragma once

#include "mecsim/rng.hpp"
#include "mecsim/model.hpp"
#include "mecsim/stage2.hpp"
#include "mecsim/stage1.hpp"
#include "mecsim/workload.hpp"
#include "mecsim/qnetwork.hpp"
#include "mecsim/caching.hpp"
#include "mecsim/harness.hpp"
