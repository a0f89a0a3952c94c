#pragma once

#include "mfc/crank_nicolson.hpp"
#include "mfc/descent.hpp"
#include "mfc/dynamics.hpp"
#include "mfc/energy.hpp"
#include "mfc/energy_mc.hpp"
#include "mfc/errors.hpp"
#include "mfc/experiments.hpp"
#include "mfc/flow.hpp"
#include "mfc/io.hpp"
#include "mfc/measure.hpp"
#include "mfc/model.hpp"
#include "mfc/pair.hpp"
#include "mfc/parallel.hpp"
#include "mfc/particles.hpp"
#include "mfc/pathlaw.hpp"
#include "mfc/rng.hpp"
#include "mfc/series.hpp"
#include "mfc/solver.hpp"
#include "mfc/wasserstein.hpp"
