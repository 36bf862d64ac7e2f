#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "heatmpc/fem.hpp"

namespace heatmpc::mm {

/// Sparse matrices use "coordinate real general"; dense matrices and vectors use
/// "array real general" (column-major). Values are written with 17 significant digits so a
/// write/read cycle is lossless.
void write_sparse(const std::filesystem::path& path, const SpMat& a, const std::string& comment = {});
void write_dense(const std::filesystem::path& path, const Eigen::MatrixXd& a, const std::string& comment = {});

SpMat read_sparse(const std::filesystem::path& path);
Eigen::MatrixXd read_dense(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`, so readers never observe a
/// partially written file.
void write_text_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace heatmpc::mm
