#pragma once

#include "abslingam/abstraction.hpp"
#include "abslingam/concretize.hpp"
#include "abslingam/csv.hpp"
#include "abslingam/discovery.hpp"
#include "abslingam/errors.hpp"
#include "abslingam/evaluate.hpp"
#include "abslingam/pipeline.hpp"
#include "abslingam/rng.hpp"
#include "abslingam/scenario.hpp"
#include "abslingam/scm.hpp"
