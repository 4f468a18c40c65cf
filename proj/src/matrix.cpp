#include "ccml/matrix.hpp"

#include "ccml/error.hpp"

namespace ccml {

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != m.cols())
            throw ValidationError("ragged rows: row " + std::to_string(r) + " has " +
                                  std::to_string(rows[r].size()) + " entries, expected " +
                                  std::to_string(m.cols()));
        for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
    }
    return m;
}

Matrix Matrix::gather_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows_)
            throw ValidationError("row index " + std::to_string(indices[i]) + " out of range " +
                                  std::to_string(rows_));
        auto src = row(indices[i]);
        auto dst = out.row(i);
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return out;
}

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& what) {
    if (m.rows() != rows || m.cols() != cols)
        throw ValidationError(what + ": expected shape " + std::to_string(rows) + "x" +
                              std::to_string(cols) + ", got " + shape_str(m));
}

void require_binary(const Matrix& m, const std::string& what) {
    for (std::size_t i = 0; i < m.size(); ++i) {
        double v = m.data()[i];
        if (v != 0.0 && v != 1.0)
            throw ValidationError(what + ": entry (" + std::to_string(i / m.cols()) + "," +
                                  std::to_string(i % m.cols()) + ") = " + std::to_string(v) +
                                  " is not binary");
    }
}

} // namespace ccml
