#pragma once

#include <string>

#include "uapatch/tensor.hpp"

namespace uapatch {

// 16-bit RGB PNG round trip for image artifacts. Values are quantized to
// 1/65535 steps on write; read returns values in [0, 1]. Writing is
// deterministic: identical pixels produce identical bytes.
void write_png(const std::string& path, const Tensor& rgb);
Tensor read_png(const std::string& path);

}  // namespace uapatch
