#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bgld/grid.hpp"

// .gsf (gridded space-time field): a text header of key=value lines, a blank
// line, then a little-endian float64 payload in row-major order with masked
// cells omitted. Field files carry exactly the keys
//   kind, lon0, lat0, dlon, dlat, ncols, nrows, ntime, months, mask
// in that order; kind=basis / kind=bgl-model / kind=climatology reuse the
// container with their own key sets. Header reals are printed in shortest
// round-trip form, so write(read(f)) is byte-identical for writer-produced
// files.

namespace bgld::gsf {

struct Document {
  std::vector<std::pair<std::string, std::string>> header;
  std::vector<double> payload;

  const std::string* find(const std::string& key) const;
  const std::string& require(const std::string& key) const;  // MalformedHeader
};

Document read_document(const std::string& path);
void write_document(const Document& doc, const std::string& path);

std::string format_double(double v);            // shortest round-trip
double parse_double(const std::string& s);      // MalformedHeader on junk
std::string encode_mask_rle(const std::vector<std::uint8_t>& mask, int ncells);
std::vector<std::uint8_t> decode_mask_rle(const std::string& s, int ncells);

Field read_field(const std::string& path);
void write_field(const Field& field, const std::string& path);

// Peek at the kind= line without decoding the payload.
std::string read_kind(const std::string& path);

}  // namespace bgld::gsf
