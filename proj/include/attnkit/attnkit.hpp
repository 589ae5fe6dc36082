#ifndef ATTNKIT_ATTNKIT_HPP
#define ATTNKIT_ATTNKIT_HPP

// Convenience umbrella: the whole library.

#include "attnkit/adjoints.hpp"
#include "attnkit/diagnostics.hpp"
#include "attnkit/hard_decoder.hpp"
#include "attnkit/io.hpp"
#include "attnkit/kernels.hpp"
#include "attnkit/oracle.hpp"
#include "attnkit/rng.hpp"
#include "attnkit/toy/dataset.hpp"
#include "attnkit/toy/infer.hpp"
#include "attnkit/toy/model.hpp"
#include "attnkit/toy/train.hpp"
#include "attnkit/types.hpp"

#endif  // ATTNKIT_ATTNKIT_HPP
