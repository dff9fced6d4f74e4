#pragma once

// Everything except the network server (sessiond/server.hpp needs Boost).

#include "core.hpp"
#include "dataset.hpp"
#include "envsim.hpp"
#include "policybank.hpp"
#include "optlabel.hpp"
#include "neurosynth.hpp"
#include "preproc.hpp"
#include "featwin.hpp"
#include "learners/model.hpp"
#include "evalharness.hpp"
#include "pipeline.hpp"
#include "config.hpp"
#include "sessiond/session.hpp"
