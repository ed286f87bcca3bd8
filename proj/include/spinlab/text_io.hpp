#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <string>
#include <vector>

namespace spinlab {

using Json = nlohmann::ordered_json;

// Shortest round-trip decimal form of v (parsing it back yields the same bits).
// All CSV/JSON emitters go through this so artifact files are byte-stable.
std::string format_double(double v);

std::string join_csv(const std::vector<std::string>& cells);

Json to_json(const Eigen::VectorXd& v);
Json to_json(const Eigen::MatrixXd& m);  // row-major nested arrays

// Writes text to path with '\n' endings, creating parent directories.
void write_text_file(const std::string& path, const std::string& text);

std::string read_text_file(const std::string& path);

}  // namespace spinlab
