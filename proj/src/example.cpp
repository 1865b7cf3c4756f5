#include "cmg/example.hpp"

#include "cmg/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <system_error>

namespace cmg {

std::string to_json_line(const ProcessedExample& ex) {
  nlohmann::ordered_json j;
  j["sha"] = ex.sha;
  j["source"] = ex.source;
  j["target"] = ex.target;
  return j.dump();
}

ProcessedExample example_from_json(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    ProcessedExample ex;
    ex.sha = j.value("sha", std::string());
    ex.source = j.at("source").get<TokenSeq>();
    ex.target = j.at("target").get<TokenSeq>();
    return ex;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("example record: ") + e.what());
  }
}

std::vector<ProcessedExample> read_examples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<ProcessedExample> out;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(example_from_json(line));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_examples(const std::filesystem::path& path,
                    const std::vector<ProcessedExample>& examples) {
  std::string text;
  for (const auto& ex : examples) {
    text += to_json_line(ex);
    text += '\n';
  }
  write_file_atomic(path, text);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace cmg
