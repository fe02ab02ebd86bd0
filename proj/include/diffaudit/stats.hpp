#pragma once

#include "diffaudit/stats/agreement.hpp"
#include "diffaudit/stats/fdr.hpp"
#include "diffaudit/stats/normal.hpp"
#include "diffaudit/stats/power.hpp"
#include "diffaudit/stats/rank_tests.hpp"
#include "diffaudit/stats/ranks.hpp"
#include "diffaudit/stats/variance.hpp"
