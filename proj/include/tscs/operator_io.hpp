#pragma once

#include "tscs/operators.hpp"

#include <filesystem>
#include <string>

namespace tscs {

// Operator files are JSON documents:
//   {
//     "format": "tscs-operator", "version": 1,
//     "kind": "sensing" | "adjoint",
//     "input_shape": [...], "output_shape": [...], "branches": T,
//     "basis_plan": [[b_11, ..], ..], "seed": s, "init": "...",
//     "weights": [["<base64 TSCS0001 blob>", ...per mode], ...per branch]
//   }
// Bases are rebuilt from the plan; weights round-trip bit-exactly.

std::string serialize_operator(const TensorSumOperator &op);
TensorSumOperator deserialize_operator(const std::string &text);

std::string serialize_adjoint(const AdjointOperator &adj);
AdjointOperator deserialize_adjoint(const std::string &text);

void save_operator(const std::filesystem::path &path, const TensorSumOperator &op);
TensorSumOperator load_operator(const std::filesystem::path &path);

void save_adjoint(const std::filesystem::path &path, const AdjointOperator &adj);
AdjointOperator load_adjoint(const std::filesystem::path &path);

std::string read_text_file(const std::filesystem::path &path);

} // namespace tscs
