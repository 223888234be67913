#pragma once

#include "repchain/config.hpp"
#include "repchain/events.hpp"
#include "repchain/network.hpp"
#include "repchain/protocols.hpp"
#include "repchain/quantum.hpp"
#include "repchain/random.hpp"
#include "repchain/runner.hpp"
#include "repchain/statistics.hpp"
#include "repchain/world.hpp"
