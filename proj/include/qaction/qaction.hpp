#pragma once

#include "qaction/error.hpp"
#include "qaction/polynomial.hpp"
#include "qaction/action.hpp"
#include "qaction/grid.hpp"
#include "qaction/hamiltonian.hpp"
#include "qaction/spectral.hpp"
#include "qaction/parallel.hpp"
#include "qaction/propagator.hpp"
#include "qaction/trajectory.hpp"
#include "qaction/symplectic.hpp"
#include "qaction/optimize.hpp"
#include "qaction/qfit.hpp"
#include "qaction/asymptotics.hpp"
#include "qaction/chaos.hpp"
#include "qaction/io.hpp"
