#pragma once

#include "possiv/dataset.hpp"
#include "possiv/error.hpp"
#include "possiv/io.hpp"
#include "possiv/linalg.hpp"
#include "possiv/posterior.hpp"
#include "possiv/reduced_form.hpp"
#include "possiv/rng.hpp"
#include "possiv/simulate.hpp"
#include "possiv/structural.hpp"
#include "possiv/validify.hpp"
#include "possiv/violation.hpp"
#include "possiv/workflow.hpp"
