#pragma once

#include "quadmpc/axis_model.hpp"
#include "quadmpc/config.hpp"
#include "quadmpc/error.hpp"
#include "quadmpc/flight_log.hpp"
#include "quadmpc/ident.hpp"
#include "quadmpc/link.hpp"
#include "quadmpc/qp.hpp"
#include "quadmpc/sigproc.hpp"
#include "quadmpc/sim.hpp"
#include "quadmpc/ssmpc.hpp"
#include "quadmpc/types.hpp"
