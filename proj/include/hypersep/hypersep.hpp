#pragma once

#include "hypersep/core.hpp"
#include "hypersep/engine.hpp"
#include "hypersep/oracle.hpp"
#include "hypersep/retrieval.hpp"
#include "hypersep/rng.hpp"
#include "hypersep/scalar.hpp"
#include "hypersep/sequence.hpp"
#include "hypersep/solver.hpp"
