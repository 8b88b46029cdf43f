#include "eslr/gsa.hpp"

#include "eslr/error.hpp"
#include "eslr/model.hpp"

namespace eslr {

Var gsa_inject(Var features, Var embedding, const std::string& mesh_name, const std::string& embedding_name) {
    if (features.rows() != embedding.rows()) {
        throw ValidationError("mesh '" + mesh_name + "' has " + std::to_string(features.rows()) +
                              " vertices but embedding '" + embedding_name + "' has " +
                              std::to_string(embedding.rows()) + " rows; rerun `preprocess` for this mesh");
    }
    return concat_cols({features, embedding});
}

Var positive_feature_map(Var x) { return elu_plus_one(x); }

Var linear_attention(Var q, Var k, Var v) {
    if (q.cols() != k.cols() || k.rows() != v.rows()) {
        throw ShapeError("linear_attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
                         shape_str(v.shape()));
    }
    Var phi_q = positive_feature_map(q);
    Var phi_k = positive_feature_map(k);
    Var kv = matmul(transpose(phi_k), v);   // d x h
    Var z = transpose(sum_rows(phi_k));     // d x 1
    Var numerator = matmul(phi_q, kv);      // n x h
    Var denominator = matmul(phi_q, z);     // n x 1
    return div_col(numerator, denominator);
}

Var gsa_block(Var features, Var embedding, const BoundParams& params, const std::string& prefix) {
    Var x = layer_norm(features, params[prefix + ".norm.gamma"], params[prefix + ".norm.beta"]);
    Var qk_in = gsa_inject(x, embedding);
    Var q = matmul(qk_in, params[prefix + ".wq"]);
    Var k = matmul(qk_in, params[prefix + ".wk"]);
    Var v = matmul(x, params[prefix + ".wv"]);
    Var attended = linear_attention(q, k, v);
    return add(features, matmul(attended, params[prefix + ".wo"]));
}

Var gsa_forward(Var features, Var embedding, const BoundParams& params, std::size_t blocks) {
    Var x = features;
    for (std::size_t b = 0; b < blocks; ++b) x = gsa_block(x, embedding, params, gsa_prefix(b));
    return x;
}

}  // namespace eslr
