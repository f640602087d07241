#pragma once

#include "degsde/boundary.hpp"
#include "degsde/comparison.hpp"
#include "degsde/conditions.hpp"
#include "degsde/error.hpp"
#include "degsde/expr.hpp"
#include "degsde/linalg.hpp"
#include "degsde/model.hpp"
#include "degsde/modulus.hpp"
#include "degsde/parallel.hpp"
#include "degsde/paths.hpp"
#include "degsde/quadrature.hpp"
#include "degsde/rng.hpp"
