#include "nsmeta/nstf.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "nsmeta/errors.hpp"

namespace nsmeta {

static_assert(std::endian::native == std::endian::little, "NSTF1 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[6] = {'N', 'S', 'T', 'F', '1', '\0'};
// sanity bounds against corrupt headers
constexpr std::uint64_t kMaxName = 1 << 16;
constexpr std::uint64_t kMaxRank = 16;

void put_u64(std::string& out, std::uint64_t v) { out.append(reinterpret_cast<const char*>(&v), 8); }

class Reader {
 public:
  explicit Reader(const std::string& b) : b_(b) {}
  void need(std::uint64_t n) const {
    if (n > b_.size() - pos_) throw DataError("NSTF1: truncated file");
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, b_.data() + pos_, 8);
    pos_ += 8;
    return v;
  }
  std::string bytes(std::uint64_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void doubles(std::vector<double>& out, std::uint64_t n) {
    if (n > (b_.size() - pos_) / 8) throw DataError("NSTF1: truncated payload");
    out.resize(n);
    std::memcpy(out.data(), b_.data() + pos_, n * 8);
    pos_ += n * 8;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::string& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_nstf(const std::vector<NamedTensor>& entries) {
  std::string out(kMagic, 6);
  put_u64(out, entries.size());
  for (const auto& e : entries) {
    std::uint64_t count = 1;
    for (auto d : e.dims) count *= d;
    if (count != e.data.size()) throw ShapeError("NSTF1: entry " + e.name + " data does not match dims");
    put_u64(out, e.name.size());
    out += e.name;
    put_u64(out, e.dims.size());
    for (auto d : e.dims) put_u64(out, d);
    out.append(reinterpret_cast<const char*>(e.data.data()), e.data.size() * 8);
  }
  return out;
}

std::vector<NamedTensor> decode_nstf(const std::string& bytes) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 6) != 0) throw DataError("NSTF1: bad magic");
  Reader r(bytes);
  r.bytes(6);
  const std::uint64_t n = r.u64();
  std::vector<NamedTensor> out;
  for (std::uint64_t i = 0; i < n; ++i) {
    NamedTensor e;
    const std::uint64_t len = r.u64();
    if (len > kMaxName) throw DataError("NSTF1: implausible name length");
    e.name = r.bytes(len);
    const std::uint64_t rank = r.u64();
    if (rank > kMaxRank) throw DataError("NSTF1: implausible rank");
    std::uint64_t count = 1;
    for (std::uint64_t k = 0; k < rank; ++k) {
      e.dims.push_back(r.u64());
      if (e.dims.back() != 0 && count > (std::uint64_t{1} << 40) / e.dims.back())
        throw DataError("NSTF1: implausible dims");
      count *= e.dims.back();
    }
    r.doubles(e.data, count);
    out.push_back(std::move(e));
  }
  if (!r.done()) throw DataError("NSTF1: trailing bytes");
  return out;
}

void write_nstf(const std::string& path, const std::vector<NamedTensor>& entries) {
  const std::string bytes = encode_nstf(entries);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("NSTF1: cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("NSTF1: write failed for " + path);
}

std::vector<NamedTensor> read_nstf(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("NSTF1: cannot open " + path);
  std::ostringstream s;
  s << f.rdbuf();
  return decode_nstf(s.str());
}

const NamedTensor& find_entry(const std::vector<NamedTensor>& entries, const std::string& name) {
  for (const auto& e : entries)
    if (e.name == name) return e;
  throw DataError("NSTF1: no entry named " + name);
}

}  // namespace nsmeta
