#pragma once

#include "spinglass/cascade.hpp"
#include "spinglass/error.hpp"
#include "spinglass/functional.hpp"
#include "spinglass/geometry.hpp"
#include "spinglass/linalg.hpp"
#include "spinglass/mixture.hpp"
#include "spinglass/montecarlo.hpp"
#include "spinglass/optimizer.hpp"
#include "spinglass/parallel.hpp"
#include "spinglass/rng.hpp"
#include "spinglass/instances.hpp"
