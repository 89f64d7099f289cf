#pragma once

#include "dsmpc/error.hpp"
#include "dsmpc/linalg.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace dsmpc::detail {

using json = nlohmann::json;

inline const json& require(const json& j, const char* key, const char* module) {
    if (!j.is_object() || !j.contains(key)) {
        throw Error(ErrorCode::ParseError, module, std::string("missing key '") + key + "'");
    }
    return j.at(key);
}

inline Matrix to_matrix(const json& j, const char* module, const std::string& what) {
    if (!j.is_array()) throw Error(ErrorCode::ParseError, module, what + ": expected an array of rows");
    const auto rows = static_cast<Index>(j.size());
    if (rows == 0) return Matrix(0, 0);
    if (!j[0].is_array()) throw Error(ErrorCode::ParseError, module, what + ": expected nested arrays");
    const auto cols = static_cast<Index>(j[0].size());
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        const json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
            throw Error(ErrorCode::DimensionMismatch, module, what + ": ragged rows");
        }
        for (Index c = 0; c < cols; ++c) {
            const json& v = row[static_cast<std::size_t>(c)];
            if (!v.is_number()) throw Error(ErrorCode::ParseError, module, what + ": non-numeric entry");
            m(r, c) = v.get<double>();
        }
    }
    return m;
}

inline Vector to_vector(const json& j, const char* module, const std::string& what) {
    if (!j.is_array()) throw Error(ErrorCode::ParseError, module, what + ": expected an array");
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw Error(ErrorCode::ParseError, module, what + ": non-numeric entry");
        v(static_cast<Index>(i)) = j[i].get<double>();
    }
    return v;
}

inline json from_matrix(const Matrix& m) {
    json out = json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        out.push_back(std::move(row));
    }
    return out;
}

inline json from_vector(const Vector& v) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline std::vector<Matrix> to_matrix_list(const json& j, const char* module, const std::string& what) {
    if (!j.is_array()) throw Error(ErrorCode::ParseError, module, what + ": expected a list of matrices");
    std::vector<Matrix> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(to_matrix(j[i], module, what));
    return out;
}

inline json from_matrix_list(const std::vector<Matrix>& list) {
    json out = json::array();
    for (const auto& m : list) out.push_back(from_matrix(m));
    return out;
}

}  // namespace dsmpc::detail
