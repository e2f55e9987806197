#pragma once

// Umbrella header.

#include "cfres/channel.hpp"
#include "cfres/config.hpp"
#include "cfres/conic.hpp"
#include "cfres/error.hpp"
#include "cfres/experiment.hpp"
#include "cfres/oracle.hpp"
#include "cfres/ppzf.hpp"
#include "cfres/resilience.hpp"
#include "cfres/sca.hpp"
#include "cfres/scenario.hpp"
#include "cfres/trace_io.hpp"
#include "cfres/units.hpp"
#include "cfres/validation.hpp"
