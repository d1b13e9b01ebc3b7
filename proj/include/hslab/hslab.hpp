#pragma once

// Umbrella header for the analysis library.

#include "hslab/dataset.hpp"
#include "hslab/error.hpp"
#include "hslab/matrix.hpp"
#include "hslab/metrics.hpp"
#include "hslab/mutual_info.hpp"
#include "hslab/neuron_analysis.hpp"
#include "hslab/pipeline.hpp"
#include "hslab/probe.hpp"
#include "hslab/random.hpp"
#include "hslab/report.hpp"
#include "hslab/synthetic.hpp"
