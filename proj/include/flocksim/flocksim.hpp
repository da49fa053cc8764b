#pragma once

// Convenience header pulling in the whole library.

#include "flocksim/analysis.hpp"
#include "flocksim/dynamics.hpp"
#include "flocksim/io.hpp"
#include "flocksim/lowerbound.hpp"
#include "flocksim/matrix.hpp"
#include "flocksim/network.hpp"
#include "flocksim/policy.hpp"
#include "flocksim/residue.hpp"
#include "flocksim/scalar.hpp"
#include "flocksim/spectral.hpp"
