#pragma once

#include "cmg/seq2seq/model.hpp"
#include "cmg/vocab.hpp"

#include <cstddef>
#include <map>
#include <string>
#include <string_view>

namespace cmg::cli {

std::string xml_escape(std::string_view text);

// Bar chart of an exact-count histogram (value -> frequency).
std::string histogram_svg(const std::map<std::size_t, std::size_t>& hist, std::string_view title,
                          std::string_view x_label);

// Heatmap with source tokens along x and generated tokens along y; darker
// cells carry more attention.
std::string attention_svg(const TokenSeq& source, const TokenSeq& target, const seq2seq::Mat& alpha);

// {"source":[tok],"target":[tok],"alpha":[[float]]}
std::string attention_json(const TokenSeq& source, const TokenSeq& target, const seq2seq::Mat& alpha);

}  // namespace cmg::cli
