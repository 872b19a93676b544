#ifndef TSRNDE_TSRNDE_HPP
#define TSRNDE_TSRNDE_HPP

#include "error.hpp"
#include "eval.hpp"
#include "features.hpp"
#include "gradcheck.hpp"
#include "ingest.hpp"
#include "nn.hpp"
#include "pipeline.hpp"
#include "repro.hpp"
#include "synthgen.hpp"
#include "tsr.hpp"

#endif
