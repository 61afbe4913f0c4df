#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace ehsrb {

using Json = nlohmann::json;

// Shortest round-trip decimal form; inf/nan spelled out.
std::string format_double(double x);

// RFC-4180 writer: fields with comma, quote or line break are quoted and
// embedded quotes doubled; records end with CRLF.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}
  CsvWriter& field(std::string_view s);
  CsvWriter& field(double x) { return field(format_double(x)); }
  CsvWriter& field(long long x) { return field(std::to_string(x)); }
  CsvWriter& field(int x) { return field(static_cast<long long>(x)); }
  CsvWriter& field(std::size_t x) { return field(std::to_string(x)); }
  void end_row();
  void row(const std::vector<std::string>& fields);

 private:
  std::ostream& os_;
  bool first_ = true;
};

std::string csv_escape(std::string_view s);

// JSON text with sorted keys, 2-space indent and trailing newline.
std::string dump_json(const Json& j);
void write_json_file(const std::filesystem::path& p, const Json& j);
void write_text_file(const std::filesystem::path& p, const std::string& s);
std::string read_text_file(const std::filesystem::path& p);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& p);

}  // namespace ehsrb
