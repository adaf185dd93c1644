#pragma once

#include "busca/config.hpp"
#include "busca/core.hpp"
#include "busca/features.hpp"
#include "busca/geometry.hpp"
#include "busca/hungarian.hpp"
#include "busca/kalman.hpp"
#include "busca/metrics.hpp"
#include "busca/mot_io.hpp"
#include "busca/proposals.hpp"
#include "busca/random.hpp"
#include "busca/ste.hpp"
#include "busca/synth.hpp"
#include "busca/tracker.hpp"
#include "busca/transformer/model.hpp"
#include "busca/transformer/network.hpp"
#include "busca/transformer/serialize.hpp"
#include "busca/transformer/tokens.hpp"
#include "busca/transformer/train.hpp"
