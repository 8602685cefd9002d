#pragma once

#include "crd/citest.hpp"
#include "crd/config.hpp"
#include "crd/continual.hpp"
#include "crd/error.hpp"
#include "crd/intervention.hpp"
#include "crd/model.hpp"
#include "crd/pcmci.hpp"
#include "crd/scenarios.hpp"
#include "crd/session.hpp"
#include "crd/simulator.hpp"
#include "crd/timeseries.hpp"
