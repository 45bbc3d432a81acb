#pragma once

#include <map>
#include <string>

#include "vmb/model.hpp"
#include "vmb/runconfig.hpp"

namespace vmb {

/// Container layout (version 1):
///   line   "vm-beautynet-checkpoint 1"
///   line   "config-bytes <N>"          then N bytes of canonical config text
///   line   "meta <K>"                  then K lines "<key> <value>"
///   line   "tensors <T>"               then T lines "<name> <rank> <dims...> <offset>"
///   line   "payload <elems>"           then elems * 4 bytes of little-endian float32
/// Offsets are in elements. The loader rejects version, name and shape
/// mismatches with named errors.
struct CheckpointMeta {
    std::map<std::string, std::string> entries;
};

void save_checkpoint(const std::string& path, const VmBeautyNet& model, const RunConfig& cfg,
                     const CheckpointMeta& meta = {});

struct LoadedCheckpoint {
    VmBeautyNet model;
    RunConfig config;
    CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace vmb
