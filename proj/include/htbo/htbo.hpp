#ifndef HTBO_HTBO_HPP
#define HTBO_HTBO_HPP

#include "htbo/acquisition.hpp"
#include "htbo/benchmarks.hpp"
#include "htbo/core.hpp"
#include "htbo/gp.hpp"
#include "htbo/hyper.hpp"
#include "htbo/objective.hpp"
#include "htbo/optimizer.hpp"
#include "htbo/sobol.hpp"
#include "htbo/tree.hpp"

#endif  // HTBO_HTBO_HPP
