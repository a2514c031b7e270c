#pragma once

// Umbrella header: the full sleep-staging engine.

#include "somno/augment.hpp"
#include "somno/checkpoint.hpp"
#include "somno/errors.hpp"
#include "somno/gradcheck.hpp"
#include "somno/iir.hpp"
#include "somno/metrics.hpp"
#include "somno/model.hpp"
#include "somno/nn.hpp"
#include "somno/ops.hpp"
#include "somno/parallel.hpp"
#include "somno/rational.hpp"
#include "somno/recording.hpp"
#include "somno/resample.hpp"
#include "somno/rng.hpp"
#include "somno/runconfig.hpp"
#include "somno/signal.hpp"
#include "somno/sigproc.hpp"
#include "somno/synth.hpp"
#include "somno/tensor.hpp"
#include "somno/train.hpp"
