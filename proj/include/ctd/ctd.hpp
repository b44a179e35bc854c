#pragma once

#include "ctd/calibration.hpp"
#include "ctd/common.hpp"
#include "ctd/config.hpp"
#include "ctd/dataset.hpp"
#include "ctd/delegation.hpp"
#include "ctd/harness.hpp"
#include "ctd/probes.hpp"
#include "ctd/risk.hpp"
#include "ctd/synth.hpp"
