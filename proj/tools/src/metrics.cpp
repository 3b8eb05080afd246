#include "metrics.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>

namespace abacus::cli {

namespace {

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%#.9g", v);
  return buf;
}

}  // namespace

std::string render_record(const MetricRecord& rec) {
  std::map<std::string, std::string> fields;
  fields["iter"] = std::to_string(rec.iter);
  for (const auto& [key, value] : rec.values) {
    if (!std::isfinite(value)) continue;
    fields[key] = format_value(value);
  }
  std::string line = "{";
  bool first = true;
  for (const auto& [key, text] : fields) {
    if (!first) line += ',';
    first = false;
    line += '"';
    line += key;
    line += "\":";
    line += text;
  }
  line += "}\n";
  return line;
}

MetricSink::MetricSink(const std::string& path) : path_(path) {
  if (path == "-") {
    out_ = &std::cout;
    return;
  }
  file_.open(path, std::ios::out | std::ios::trunc);
  if (!file_) throw IoError("cannot open metric sink '" + path + "'");
  out_ = &file_;
}

void MetricSink::write(const MetricRecord& rec) {
  (*out_) << render_record(rec);
  if (!*out_) throw IoError("write to metric sink '" + path_ + "' failed");
}

void MetricSink::flush() {
  out_->flush();
  if (!*out_) throw IoError("flush of metric sink '" + path_ + "' failed");
}

}  // namespace abacus::cli
