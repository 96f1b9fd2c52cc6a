#pragma once

// Umbrella header: dynamic input-output shock propagation and calibration.

#include "iosw/analytics.hpp"
#include "iosw/calibration.hpp"
#include "iosw/dynamics.hpp"
#include "iosw/errors.hpp"
#include "iosw/ingest.hpp"
#include "iosw/iotable.hpp"
#include "iosw/leontief.hpp"
#include "iosw/numeric.hpp"
#include "iosw/random.hpp"
