#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

namespace abacus::cli {

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// One reporting-interval snapshot. Non-finite values are dropped at render
// time. wall_ms never enters the stream: equal seeds must give byte-identical
// output, so timings go to stderr instead.
struct MetricRecord {
  std::int64_t iter = 0;
  std::map<std::string, double> values;
  std::optional<double> wall_ms;
};

// Flat JSON object on one line: keys sorted, floats with 9 significant
// digits (trailing zeros kept), iter as a plain integer.
std::string render_record(const MetricRecord& rec);

// JSON-lines sink; path "-" writes to stdout. Failures throw IoError.
class MetricSink {
 public:
  explicit MetricSink(const std::string& path);

  void write(const MetricRecord& rec);
  void flush();
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream file_;
  std::ostream* out_ = nullptr;
};

}  // namespace abacus::cli
