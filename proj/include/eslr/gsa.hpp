#pragma once

#include <cstddef>
#include <string>

#include "eslr/params.hpp"
#include "eslr/tensor.hpp"

namespace eslr {

/// [features | embedding] along the feature axis. The names only appear in
/// the error raised when the row counts disagree.
Var gsa_inject(Var features, Var embedding, const std::string& mesh_name = "garment",
               const std::string& embedding_name = "embedding");

/// elu(x) + 1, strictly positive.
Var positive_feature_map(Var x);

/// out_i = phi(q_i)^T S / (phi(q_i) . z) with S = sum_j phi(k_j) v_j^T and
/// z = sum_j phi(k_j); linear in the row count.
Var linear_attention(Var q, Var k, Var v);

/// Pre-norm, inject, project, attend, output projection, residual.
Var gsa_block(Var features, Var embedding, const BoundParams& params, const std::string& prefix);

Var gsa_forward(Var features, Var embedding, const BoundParams& params, std::size_t blocks);

}  // namespace eslr
