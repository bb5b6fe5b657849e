#pragma once

#include "ddig/analysis.hpp"
#include "ddig/decompose.hpp"
#include "ddig/embedstore.hpp"
#include "ddig/error.hpp"
#include "ddig/manifold.hpp"
#include "ddig/report_io.hpp"
