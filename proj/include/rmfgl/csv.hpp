#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace rmfgl {

/// %.12g, the one number format of every CSV the tool writes.
std::string csv_number(double x);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);
  /// Appends pre-formatted lines (each already newline-terminated).
  void raw(const std::string& text) { out_ << text; }
  void close();

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws IncompleteRun if absent.
  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
};

/// Plain comma-separated file without quoting. Throws IncompleteRun when the
/// file is missing.
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace rmfgl
