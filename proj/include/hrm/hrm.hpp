#pragma once

#include "hrm/config.hpp"
#include "hrm/dataset.hpp"
#include "hrm/detect.hpp"
#include "hrm/error.hpp"
#include "hrm/evaluate.hpp"
#include "hrm/features.hpp"
#include "hrm/fusion.hpp"
#include "hrm/image.hpp"
#include "hrm/model_io.hpp"
#include "hrm/parallel.hpp"
#include "hrm/pls.hpp"
#include "hrm/synth.hpp"
#include "hrm/training.hpp"
#include "hrm/voting.hpp"
