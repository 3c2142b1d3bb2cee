#pragma once

#include "wildface/checkpoint.hpp"
#include "wildface/dataset_builder.hpp"
#include "wildface/error.hpp"
#include "wildface/eval_metrics.hpp"
#include "wildface/fam.hpp"
#include "wildface/grad_check.hpp"
#include "wildface/image_quality.hpp"
#include "wildface/parallel.hpp"
#include "wildface/pose_geometry.hpp"
#include "wildface/tensor.hpp"
#include "wildface/text.hpp"
#include "wildface/train.hpp"
