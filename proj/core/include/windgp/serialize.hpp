#pragma once

#include <string>

#include "windgp/inference.hpp"
#include "windgp/kernels.hpp"

namespace windgp {

/// Kernel model <-> JSON. Numbers round-trip exactly (shortest form that
/// parses back to the same double).
std::string kernel_model_to_json(const KernelModel& m);
KernelModel kernel_model_from_json(const std::string& text);  // SchemaMismatch on bad input

/// Optimizer checkpoint together with the metadata needed to rebuild the
/// parameter layout it refers to.
std::string checkpoint_to_json(const OptimCheckpoint& c, const FlatParams& prototype);

struct LoadedCheckpoint {
  OptimCheckpoint checkpoint;
  FlatParams prototype;  // zero-valued; layout/anchors/f_max restored
};

LoadedCheckpoint checkpoint_from_json(const std::string& text);

}  // namespace windgp
