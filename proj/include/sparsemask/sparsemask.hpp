#pragma once

// Umbrella header.

#include "sparsemask/attack.hpp"
#include "sparsemask/bayes.hpp"
#include "sparsemask/config.hpp"
#include "sparsemask/errors.hpp"
#include "sparsemask/harness.hpp"
#include "sparsemask/image.hpp"
#include "sparsemask/image_io.hpp"
#include "sparsemask/oracle.hpp"
#include "sparsemask/random.hpp"
#include "sparsemask/remote.hpp"
#include "sparsemask/sampling.hpp"
#include "sparsemask/scores.hpp"
#include "sparsemask/synth.hpp"
