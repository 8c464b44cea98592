#pragma once

#include "infbeta/error.hpp"
#include "infbeta/numerics.hpp"
#include "infbeta/distribution.hpp"
#include "infbeta/links.hpp"
#include "infbeta/model.hpp"
#include "infbeta/fitting.hpp"
#include "infbeta/inference.hpp"
#include "infbeta/diagnostics.hpp"
#include "infbeta/io.hpp"
#include "infbeta/simulation.hpp"
#include "infbeta/commands.hpp"
