#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace nmf {

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

/// Reads a delimited text file: first line is the header, the rest are rows of doubles.
struct TextTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

TextTable read_text_table(const std::filesystem::path& path, char delim = ',');

/// Writes text atomically enough for our purposes: creates parents, truncates, checks the stream.
void write_text_file(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace nmf
