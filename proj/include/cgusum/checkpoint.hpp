#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cgusum/model.hpp"

namespace cgusum {

struct AdamSnapshot {
    int64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    // m/v tensors ride along in the tensor section under the reserved
    // prefixes "adam.m." and "adam.v.".
};

/// Everything needed to resume or serve a model. Tensor order in the file is
/// the registration order, so save -> load -> save is byte-identical.
struct Checkpoint {
    ModelConfig config;
    std::vector<std::pair<std::string, Tensor>> tensors;
    std::optional<AdamSnapshot> optimizer;
    int64_t epoch = 0;
    double lr = 0.0;

    static Checkpoint of_model(const Model& m, int64_t epoch, double lr);
    Model to_model() const;  // validates names and shapes against config
};

// Binary layout: magic "CGUS", version u32 LE, u32-length-prefixed UTF-8
// JSON header, tensor count u32; per tensor: u32-length-prefixed name, dtype
// tag u8 (0=f32, 1=f64), rank u8, dims u32 LE, raw scalars LE row-major.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cgusum
