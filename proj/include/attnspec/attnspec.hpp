#pragma once

#include "attnspec/classifier.hpp"
#include "attnspec/data_io.hpp"
#include "attnspec/error.hpp"
#include "attnspec/evaluation.hpp"
#include "attnspec/features.hpp"
#include "attnspec/metrics.hpp"
#include "attnspec/parallel.hpp"
#include "attnspec/random.hpp"
#include "attnspec/serialization.hpp"
#include "attnspec/signal_ops.hpp"
#include "attnspec/toy_model.hpp"
