#pragma once

#include "cmg/vocab.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cmg {

// Parallel diff and message token sequences produced by a pipeline run.
struct ProcessedExample {
  TokenSeq source;  // diff tokens
  TokenSeq target;  // message tokens
  std::string sha;

  bool operator==(const ProcessedExample&) const = default;
};

// {"sha": str, "source": [str], "target": [str]} on one line, no trailing newline.
std::string to_json_line(const ProcessedExample& ex);
ProcessedExample example_from_json(std::string_view line);

std::vector<ProcessedExample> read_examples(const std::filesystem::path& path);
void write_examples(const std::filesystem::path& path, const std::vector<ProcessedExample>& examples);

// Writes `contents` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace cmg
