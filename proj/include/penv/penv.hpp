#pragma once

#include "penv/core.hpp"
#include "penv/rng.hpp"
#include "penv/poly.hpp"
#include "penv/space.hpp"
#include "penv/field.hpp"
#include "penv/disc.hpp"
#include "penv/functional.hpp"
#include "penv/refine.hpp"
#include "penv/envelope.hpp"
#include "penv/hull.hpp"
#include "penv/oracle.hpp"
#include "penv/io.hpp"
#include "penv/run.hpp"
