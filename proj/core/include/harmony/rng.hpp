#pragma once

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include <cstdint>
#include <string_view>

namespace harmony {

// splitmix64; used to derive independent child seeds from one base seed.
inline uint64_t mix_seed(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Child seed for a named stream, e.g. derive_seed(seed, "sample", idx).
inline uint64_t derive_seed(uint64_t base, std::string_view stream, uint64_t index = 0) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : stream) h = (h ^ static_cast<uint8_t>(c)) * 0x100000001b3ULL;
    return mix_seed(base ^ mix_seed(h) ^ mix_seed(index * 0x9e3779b97f4a7c15ULL + 1));
}

inline torch::Generator make_generator(uint64_t seed) {
    return at::detail::createCPUGenerator(seed);
}

}  // namespace harmony
