#include "bgld/gsf.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>

namespace bgld::gsf {

namespace {

void store_le64(double v, unsigned char* out) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  if constexpr (std::endian::native == std::endian::big)
    bits = __builtin_bswap64(bits);
  std::memcpy(out, &bits, 8);
}

double load_le64(const unsigned char* in) {
  std::uint64_t bits;
  std::memcpy(&bits, in, 8);
  if constexpr (std::endian::native == std::endian::big)
    bits = __builtin_bswap64(bits);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

long long parse_int(const std::string& s, const std::string& key) {
  long long v = 0;
  auto rc = std::from_chars(s.data(), s.data() + s.size(), v);
  if (rc.ec != std::errc{} || rc.ptr != s.data() + s.size())
    fail(ErrorCode::MalformedHeader, key + "='" + s + "' is not an integer");
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto rc = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, rc.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto rc = std::from_chars(s.data(), s.data() + s.size(), v);
  if (rc.ec != std::errc{} || rc.ptr != s.data() + s.size())
    fail(ErrorCode::MalformedHeader, "'" + s + "' is not a real number");
  return v;
}

std::string encode_mask_rle(const std::vector<std::uint8_t>& mask, int ncells) {
  std::string out;
  int i = 0;
  while (i < ncells) {
    const int bit = mask.empty() ? 1 : (mask[i] != 0);
    int run = 1;
    while (i + run < ncells &&
           (mask.empty() ? 1 : (mask[i + run] != 0)) == bit)
      ++run;
    if (!out.empty()) out += ',';
    out += std::to_string(run);
    out += 'x';
    out += static_cast<char>('0' + bit);
    i += run;
  }
  return out;
}

std::vector<std::uint8_t> decode_mask_rle(const std::string& s, int ncells) {
  std::vector<std::uint8_t> mask;
  mask.reserve(ncells);
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t comma = s.find(',', pos);
    if (comma == std::string::npos) comma = s.size();
    const std::size_t x = s.find('x', pos);
    if (x == std::string::npos || x >= comma)
      fail(ErrorCode::MalformedHeader, "mask run '" + s.substr(pos, comma - pos) + "'");
    int run = 0;
    auto rc = std::from_chars(s.data() + pos, s.data() + x, run);
    if (rc.ec != std::errc{} || rc.ptr != s.data() + x || run <= 0)
      fail(ErrorCode::MalformedHeader, "mask run count in '" + s + "'");
    if (x + 2 != comma || (s[x + 1] != '0' && s[x + 1] != '1'))
      fail(ErrorCode::MalformedHeader, "mask run bit in '" + s + "'");
    mask.insert(mask.end(), run, static_cast<std::uint8_t>(s[x + 1] - '0'));
    pos = comma + 1;
  }
  if (static_cast<int>(mask.size()) != ncells)
    fail(ErrorCode::MalformedHeader,
         "mask covers " + std::to_string(mask.size()) + " cells, grid has " +
             std::to_string(ncells));
  return mask;
}

const std::string* Document::find(const std::string& key) const {
  for (const auto& [k, v] : header)
    if (k == key) return &v;
  return nullptr;
}

const std::string& Document::require(const std::string& key) const {
  const std::string* v = find(key);
  if (!v) fail(ErrorCode::MalformedHeader, "missing header key '" + key + "'");
  return *v;
}

Document read_document(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoFailure, "cannot open '" + path + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorCode::IoFailure, "read error on '" + path + "'");

  // header ends at the first blank line
  std::size_t pos = 0;
  Document doc;
  for (;;) {
    if (pos >= bytes.size())
      fail(ErrorCode::MalformedHeader, "no blank line terminating header in '" + path + "'");
    const char* nl = static_cast<const char*>(
        std::memchr(bytes.data() + pos, '\n', bytes.size() - pos));
    if (!nl)
      fail(ErrorCode::MalformedHeader, "unterminated header line in '" + path + "'");
    const std::size_t eol = static_cast<std::size_t>(nl - bytes.data());
    if (eol == pos) {  // blank line
      pos = eol + 1;
      break;
    }
    const std::string line(bytes.data() + pos, eol - pos);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::MalformedHeader, "line without '=' in '" + path + "': " + line);
    doc.header.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    pos = eol + 1;
  }

  const std::size_t nbytes = bytes.size() - pos;
  if (nbytes % 8 != 0)
    fail(ErrorCode::DimensionMismatch,
         "payload of '" + path + "' is " + std::to_string(nbytes) +
             " bytes, not a multiple of 8");
  doc.payload.resize(nbytes / 8);
  for (std::size_t i = 0; i < doc.payload.size(); ++i)
    doc.payload[i] =
        load_le64(reinterpret_cast<const unsigned char*>(bytes.data() + pos + 8 * i));
  return doc;
}

void write_document(const Document& doc, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot open '" + path + "' for writing");
  std::string text;
  for (const auto& [k, v] : doc.header) {
    text += k;
    text += '=';
    text += v;
    text += '\n';
  }
  text += '\n';
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  std::vector<unsigned char> buf(doc.payload.size() * 8);
  for (std::size_t i = 0; i < doc.payload.size(); ++i)
    store_le64(doc.payload[i], buf.data() + 8 * i);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  out.flush();
  if (!out) fail(ErrorCode::IoFailure, "write error on '" + path + "'");
}

std::string read_kind(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoFailure, "cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("kind=", 0) != 0)
    fail(ErrorCode::MalformedHeader, "'" + path + "' does not start with kind=");
  return line.substr(5);
}

namespace {

const char* kFieldKeys[] = {"kind",  "lon0",  "lat0",  "dlon",   "dlat",
                            "ncols", "nrows", "ntime", "months", "mask"};

}  // namespace

Field read_field(const std::string& path) {
  const Document doc = read_document(path);
  if (doc.header.size() != std::size(kFieldKeys))
    fail(ErrorCode::MalformedHeader,
         "'" + path + "' has " + std::to_string(doc.header.size()) +
             " header lines, expected " + std::to_string(std::size(kFieldKeys)));
  for (std::size_t i = 0; i < std::size(kFieldKeys); ++i)
    if (doc.header[i].first != kFieldKeys[i])
      fail(ErrorCode::MalformedHeader, "'" + path + "' header line " +
                                           std::to_string(i + 1) + " is '" +
                                           doc.header[i].first + "', expected '" +
                                           kFieldKeys[i] + "'");

  Field f;
  const std::string& kind = doc.require("kind");
  if (kind == "coarse")
    f.spec.kind = GridKind::coarse;
  else if (kind == "fine")
    f.spec.kind = GridKind::fine;
  else
    fail(ErrorCode::MalformedHeader, "kind='" + kind + "' is not a field kind");

  f.spec.lon0 = parse_double(doc.require("lon0"));
  f.spec.lat0 = parse_double(doc.require("lat0"));
  f.spec.dlon = parse_double(doc.require("dlon"));
  f.spec.dlat = parse_double(doc.require("dlat"));
  f.spec.ncols = static_cast<int>(parse_int(doc.require("ncols"), "ncols"));
  f.spec.nrows = static_cast<int>(parse_int(doc.require("nrows"), "nrows"));
  const long long ntime = parse_int(doc.require("ntime"), "ntime");
  if (ntime < 0) fail(ErrorCode::MalformedHeader, "ntime < 0");
  f.spec.mask = decode_mask_rle(doc.require("mask"), f.spec.n_cells());

  const std::string& months = doc.require("months");
  std::size_t pos = 0;
  while (pos < months.size()) {
    std::size_t comma = months.find(',', pos);
    if (comma == std::string::npos) comma = months.size();
    f.time.entries.push_back(parse_year_month(months.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  if (static_cast<long long>(f.time.entries.size()) != ntime)
    fail(ErrorCode::MalformedHeader,
         "months lists " + std::to_string(f.time.entries.size()) +
             " entries, ntime=" + std::to_string(ntime));

  const std::size_t expected =
      static_cast<std::size_t>(ntime) * static_cast<std::size_t>(f.spec.n_active());
  if (doc.payload.size() != expected)
    fail(ErrorCode::DimensionMismatch,
         "'" + path + "' payload has " + std::to_string(doc.payload.size()) +
             " values, expected " + std::to_string(expected));

  f.values = Matrix(ntime, f.spec.n_active());
  std::memcpy(f.values.data(), doc.payload.data(), expected * sizeof(double));
  f.validate();
  return f;
}

void write_field(const Field& field, const std::string& path) {
  if (field.time.entries.empty())
    fail(ErrorCode::MalformedInput, "field has empty time index");
  field.validate();

  Document doc;
  doc.header.emplace_back("kind",
                          field.spec.kind == GridKind::coarse ? "coarse" : "fine");
  doc.header.emplace_back("lon0", format_double(field.spec.lon0));
  doc.header.emplace_back("lat0", format_double(field.spec.lat0));
  doc.header.emplace_back("dlon", format_double(field.spec.dlon));
  doc.header.emplace_back("dlat", format_double(field.spec.dlat));
  doc.header.emplace_back("ncols", std::to_string(field.spec.ncols));
  doc.header.emplace_back("nrows", std::to_string(field.spec.nrows));
  doc.header.emplace_back("ntime", std::to_string(field.time.size()));
  std::string months;
  for (std::size_t i = 0; i < field.time.entries.size(); ++i) {
    if (i) months += ',';
    months += format_year_month(field.time.entries[i]);
  }
  doc.header.emplace_back("months", months);
  doc.header.emplace_back("mask",
                          encode_mask_rle(field.spec.mask, field.spec.n_cells()));

  doc.payload.assign(field.values.data(),
                     field.values.data() + field.values.rows() * field.values.cols());
  write_document(doc, path);
}

}  // namespace bgld::gsf
