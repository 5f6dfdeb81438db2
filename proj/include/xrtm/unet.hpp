#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "xrtm/tensor_ops.hpp"

namespace xrtm::nn {

/// Encoder stages use base * 2^i channels, the bottleneck base * 2^depth.
struct UNetConfig {
    int base_channels = 32;
    int depth = 3;
    int in_channels = 1;
    int out_channels = 1;

    bool operator==(const UNetConfig&) const = default;
};

void validate(const UNetConfig& cfg);

/// Closed-form weight + bias count.
std::int64_t count_parameters(const UNetConfig& cfg);

template <class T>
struct ParamView {
    std::string name;
    std::vector<Index> shape;
    T* data = nullptr;
    Index size = 0;
};

/// Activations kept from a forward pass for the backward pass.
template <class T>
struct Workspace {
    struct Block {
        Tensor4<T> input, pre1, act1, pre2, act2;
    };
    struct Up {
        Tensor4<T> input;  // deeper feature map fed to the transposed conv
        Block block;       // block.input is the concatenation [skip, upsampled]
    };
    std::vector<Block> encoder;
    std::vector<std::vector<Index>> pool_argmax;
    Block bottleneck;
    std::vector<Up> decoder;  // decoder[i] works at the resolution of encoder[i]
    Tensor4<T> head_input;
};

/// U-Net with double 3x3 convolutions (pad 1) and GELU per block, 2x2 max
/// pooling, 2x2 stride-2 transposed convolutions, skip concatenation and a
/// final 1x1 convolution.
template <class T>
class UNet {
  public:
    struct Block {
        ConvWeights<T> conv1, conv2;
    };
    struct UpBlock {
        ConvTransposeWeights<T> up;
        Block block;
    };

    UNet() : UNet(UNetConfig{}) {}
    /// All weights and biases zero.
    explicit UNet(const UNetConfig& cfg);

    const UNetConfig& config() const { return cfg_; }

    /// He-normal weights scaled by fan-in, zero biases.
    void init_he(std::uint64_t seed);

    std::vector<ParamView<T>> parameters();
    std::vector<ParamView<const T>> parameters() const;
    std::int64_t parameter_count() const;

    /// Input (N, in_channels, H, W) with H, W divisible by 2^depth.
    Tensor4<T> forward(const Tensor4<T>& x, Workspace<T>* ws = nullptr) const;
    /// Accumulates parameter gradients into `grads` (same configuration).
    /// Returns the gradient with respect to the input.
    Tensor4<T> backward(const Workspace<T>& ws, const Tensor4<T>& dy, UNet<T>& grads) const;

    void set_zero();

    template <class U>
    UNet<U> cast() const;

    std::vector<Block> encoder;
    Block bottleneck;
    std::vector<UpBlock> decoder;  // decoder[i] mirrors encoder[i]
    ConvWeights<T> head;

  private:
    UNetConfig cfg_;
};

template <class T>
template <class U>
UNet<U> UNet<T>::cast() const {
    UNet<U> out(cfg_);
    auto src = parameters();
    auto dst = out.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) {
        for (Index j = 0; j < src[i].size; ++j) dst[i].data[j] = static_cast<U>(src[i].data[j]);
    }
    return out;
}

}  // namespace xrtm::nn
