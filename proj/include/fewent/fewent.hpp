#pragma once

#include "baselines.hpp"
#include "benchmark.hpp"
#include "checkpoint.hpp"
#include "corpus.hpp"
#include "encoder.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "nnblock.hpp"
#include "random.hpp"
#include "reformulate.hpp"
#include "tensor.hpp"
#include "trainer.hpp"
