#pragma once

// NSTF1 named-tensor container: magic "NSTF1\0", u64 entry count, then per
// entry u64 name length, name bytes, u64 rank, rank x u64 dims and the
// contiguous little-endian f64 payload.

#include <cstdint>
#include <string>
#include <vector>

namespace nsmeta {

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
};

/// Throws DataError when the file cannot be written.
void write_nstf(const std::string& path, const std::vector<NamedTensor>& entries);
/// Throws DataError on a missing file, bad magic, truncation, trailing bytes
/// or a payload that does not match its dims.
std::vector<NamedTensor> read_nstf(const std::string& path);

std::string encode_nstf(const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> decode_nstf(const std::string& bytes);

/// Entry by name; throws DataError if absent.
const NamedTensor& find_entry(const std::vector<NamedTensor>& entries, const std::string& name);

}  // namespace nsmeta
