#pragma once

// Everything except manifest.hpp and verify.hpp, which need OpenSSL::Crypto.

#include "shrinkflow/acceptance.hpp"
#include "shrinkflow/dual.hpp"
#include "shrinkflow/entropy.hpp"
#include "shrinkflow/errors.hpp"
#include "shrinkflow/experiment.hpp"
#include "shrinkflow/flow.hpp"
#include "shrinkflow/geometry.hpp"
#include "shrinkflow/graph.hpp"
#include "shrinkflow/group.hpp"
#include "shrinkflow/loja.hpp"
#include "shrinkflow/optimize.hpp"
#include "shrinkflow/reduction.hpp"
#include "shrinkflow/shrinker.hpp"
#include "shrinkflow/spectral.hpp"
