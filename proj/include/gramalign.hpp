#pragma once

#include "gramalign/config.hpp"
#include "gramalign/data.hpp"
#include "gramalign/error.hpp"
#include "gramalign/eval.hpp"
#include "gramalign/gradcheck.hpp"
#include "gramalign/heads.hpp"
#include "gramalign/losses.hpp"
#include "gramalign/modality.hpp"
#include "gramalign/model.hpp"
#include "gramalign/numerics.hpp"
#include "gramalign/parallel.hpp"
#include "gramalign/rng.hpp"
#include "gramalign/scheduler.hpp"
#include "gramalign/trainer.hpp"
