#pragma once

// Overfitted image codec: per-image rate-distortion training of a small
// decoder (autoregressive entropy model + neural upsampling + synthesis) over
// hierarchical latent grids, with a range-coded bitstream.

#include "coolcodec/bits.hpp"
#include "coolcodec/bitstream.hpp"
#include "coolcodec/config.hpp"
#include "coolcodec/decode_core.hpp"
#include "coolcodec/encoder.hpp"
#include "coolcodec/entropy_model.hpp"
#include "coolcodec/image.hpp"
#include "coolcodec/latent.hpp"
#include "coolcodec/layers.hpp"
#include "coolcodec/mathutil.hpp"
#include "coolcodec/model.hpp"
#include "coolcodec/nn_coding.hpp"
#include "coolcodec/optim.hpp"
#include "coolcodec/pipeline.hpp"
#include "coolcodec/range_coder.hpp"
#include "coolcodec/rd_metrics.hpp"
#include "coolcodec/synthesis.hpp"
#include "coolcodec/tensor.hpp"
