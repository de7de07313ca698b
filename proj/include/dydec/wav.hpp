#pragma once

#include <string>

#include "dydec/types.hpp"

namespace dydec {

/// Writes mono 16-bit PCM. Samples are clipped to [-1, 1] and rounded to the nearest code.
void write_wav(const std::string& path, const AudioClip& clip);

/// Reads mono PCM (16-bit integer or 32-bit float) into [-1, 1] samples.
AudioClip read_wav(const std::string& path);

}  // namespace dydec
