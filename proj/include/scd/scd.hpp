#pragma once

#include "scd/cli.hpp"
#include "scd/corpus.hpp"
#include "scd/encoding.hpp"
#include "scd/error.hpp"
#include "scd/flow.hpp"
#include "scd/ground_truth.hpp"
#include "scd/pipeline.hpp"
#include "scd/search_space.hpp"
#include "scd/statistics.hpp"
#include "scd/trace.hpp"
