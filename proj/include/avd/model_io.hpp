// Bridges models (anything exposing named_params()) to the checkpoint
// container. Parameters are stored at full precision so save/load round
// trips are bit exact.
#pragma once

#include "avd/checkpoint.hpp"
#include "avd/tensor.hpp"

namespace avd {

template <typename Model>
void save_params(Checkpoint& ck, const std::string& prefix, Model& model) {
    for (auto& [name, p] : model.named_params())
        ck.put_f64(prefix + "." + name, p->shape(), p->data());
}

template <typename Model>
void load_params(const Checkpoint& ck, const std::string& prefix, Model& model) {
    for (auto& [name, p] : model.named_params()) {
        const auto& e = ck.at(prefix + "." + name);
        if (e.dtype != CheckpointEntry::F64)
            throw std::runtime_error("load_params: wrong dtype for " + name);
        if (e.shape != p->shape())
            throw std::runtime_error("load_params: shape mismatch for " + name);
        p->data() = e.f64;
    }
}

}  // namespace avd
