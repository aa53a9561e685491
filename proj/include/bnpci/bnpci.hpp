#pragma once

// Umbrella header. Pull in everything except report.hpp, which drags in the
// JSON dependency and is only needed by consumers that serialize.

#include "bftest.hpp"
#include "condopt.hpp"
#include "datahub.hpp"
#include "errors.hpp"
#include "gaussian.hpp"
#include "logspace.hpp"
#include "partition.hpp"
#include "tpt.hpp"
