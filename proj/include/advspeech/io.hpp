#pragma once

#include <filesystem>
#include <string>

#include "advspeech/tensor.hpp"

namespace advspeech {

// Binary tensor file: magic "ATEN", u32 rank, u32 dims..., little-endian f32
// payload. Used for checkpoints, waveforms, and attack deltas.
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace advspeech
