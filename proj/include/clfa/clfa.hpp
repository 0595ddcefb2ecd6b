#pragma once
// clfa.hpp - convenience umbrella, pulls in the whole library.

#include "clfa/common.hpp"
#include "clfa/rng.hpp"
#include "clfa/image.hpp"
#include "clfa/image_io.hpp"
#include "clfa/transforms.hpp"
#include "clfa/dataset.hpp"
#include "clfa/synthetic.hpp"
#include "clfa/nn/tensor.hpp"
#include "clfa/nn/tape.hpp"
#include "clfa/nn/layers.hpp"
#include "clfa/nn/adam.hpp"
#include "clfa/model.hpp"
#include "clfa/objectives.hpp"
#include "clfa/checkpoint.hpp"
#include "clfa/evaluate.hpp"
#include "clfa/trainer.hpp"
#include "clfa/probe.hpp"
#include "clfa/report.hpp"
#include "clfa/config.hpp"
