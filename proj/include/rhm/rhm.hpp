#pragma once

#include "rhm/dataset.hpp"
#include "rhm/error.hpp"
#include "rhm/hierarchy.hpp"
#include "rhm/io.hpp"
#include "rhm/nn.hpp"
#include "rhm/onestep.hpp"
#include "rhm/params.hpp"
#include "rhm/random.hpp"
#include "rhm/scan.hpp"
#include "rhm/sensitivity.hpp"
#include "rhm/statistics.hpp"
#include "rhm/theory.hpp"
