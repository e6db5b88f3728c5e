#pragma once

#include "matlda/densecore.hpp"
#include "matlda/random.hpp"
#include "matlda/matnorm.hpp"
#include "matlda/glasso.hpp"
#include "matlda/meansolver.hpp"
#include "matlda/bcd.hpp"
#include "matlda/classifier.hpp"
#include "matlda/simgen.hpp"
#include "matlda/metrics.hpp"
#include "matlda/tuning.hpp"
#include "matlda/io.hpp"
