#pragma once

#include "risopt/channel.hpp"
#include "risopt/harness.hpp"
#include "risopt/mu_opt.hpp"
#include "risopt/random.hpp"
#include "risopt/report.hpp"
#include "risopt/scenario.hpp"
#include "risopt/su_opt.hpp"
