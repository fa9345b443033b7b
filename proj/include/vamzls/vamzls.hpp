#pragma once

// Core library: bases, design assembly, variational fits and the global test.
// Text and JSON input/output live in vamzls/io.hpp.

#include "vamzls/basis.hpp"
#include "vamzls/cavi.hpp"
#include "vamzls/design.hpp"
#include "vamzls/errors.hpp"
#include "vamzls/numerics.hpp"
#include "vamzls/simulate.hpp"
#include "vamzls/zls.hpp"
