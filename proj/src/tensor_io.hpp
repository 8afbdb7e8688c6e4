#pragma once

#include <iosfwd>
#include <string>

#include "tensor.hpp"

namespace sfconv {

// TNSR: magic "TNSR", version u32 LE, rank u32 LE, extents rank x u64 LE,
// payload of little-endian IEEE-754 doubles in row-major order.
inline constexpr std::uint32_t kTnsrVersion = 1;

void write_tnsr(std::ostream& os, const Tensor& t);
Tensor read_tnsr(std::istream& is);
void write_tnsr_file(const Tensor& t, const std::string& path);
Tensor read_tnsr_file(const std::string& path);

// Binary PGM (P5) / PPM (P6), maxval <= 255. Returns channels x h x w with
// raw pixel values as doubles.
Tensor read_pnm_file(const std::string& path);

// Dispatch on extension: .tnsr (or anything with the TNSR magic), .pgm, .ppm.
Tensor read_image_file(const std::string& path);

}  // namespace sfconv
