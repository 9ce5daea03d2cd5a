#pragma once

// Checkpoint container: a small binary format holding the model config, a
// tensor directory and raw little-endian tensor data.
//
//   bytes 0..7   magic "RIMCKPT\0"
//   bytes 8..11  format version (u32 le)
//   bytes 12..19 header length H (u64 le)
//   bytes 20..   header: JSON (config, tensors[{name,rows,cols,dtype,offset,
//                trainable,frozen_cols}], metadata, byte_order)
//   20+H..       tensor data, column-major, at the recorded offsets
//
// Saves are deterministic: same model + metadata => identical bytes.

#include <map>
#include <string>

#include "rim/model.hpp"

namespace rim {

using CheckpointMeta = std::map<std::string, std::string>;

template <class S>
void save_checkpoint(const std::string& path, const Model<S>& model,
                     const CheckpointMeta& meta = {});

template <class S>
Model<S> load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

/// Reads just the metadata map (cheap; skips tensor data).
CheckpointMeta read_checkpoint_meta(const std::string& path);

extern template void save_checkpoint<float>(const std::string&, const Model<float>&,
                                            const CheckpointMeta&);
extern template void save_checkpoint<double>(const std::string&, const Model<double>&,
                                             const CheckpointMeta&);
extern template Model<float> load_checkpoint<float>(const std::string&, CheckpointMeta*);
extern template Model<double> load_checkpoint<double>(const std::string&, CheckpointMeta*);

}  // namespace rim
