// scvlab/scvlab.hpp - umbrella header for the numerical core.
#pragma once

#include "scvlab/approx_validator.hpp"
#include "scvlab/calibration.hpp"
#include "scvlab/churn.hpp"
#include "scvlab/errors.hpp"
#include "scvlab/params.hpp"
#include "scvlab/scv.hpp"
#include "scvlab/sensitivity.hpp"
