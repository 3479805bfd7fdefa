#pragma once

#include "qsc/chimera.hpp"
#include "qsc/common.hpp"
#include "qsc/config.hpp"
#include "qsc/datasets.hpp"
#include "qsc/dictionary.hpp"
#include "qsc/learn.hpp"
#include "qsc/patches.hpp"
#include "qsc/pipeline.hpp"
#include "qsc/qubo.hpp"
#include "qsc/solvers.hpp"
#include "qsc/thermo.hpp"
