#pragma once

#include "zsd/clustering.hpp"
#include "zsd/ensemble.hpp"
#include "zsd/error.hpp"
#include "zsd/experiment.hpp"
#include "zsd/features.hpp"
#include "zsd/ingest.hpp"
#include "zsd/metrics.hpp"
#include "zsd/pipeline.hpp"
#include "zsd/scorer.hpp"
#include "zsd/simulator.hpp"
#include "zsd/truth.hpp"
#include "zsd/types.hpp"
