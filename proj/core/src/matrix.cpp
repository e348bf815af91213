#include "fedol/matrix.hpp"

#include <cmath>
#include <string>

#include "fedol/errors.hpp"

namespace fedol {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
  std::size_t r = 0;
  for (const auto& row : rows) {
    if (row.size() != m.cols()) {
      throw ShapeError("from_rows: ragged initializer");
    }
    std::size_t c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Matrix::require_finite(const char* what) const {
  if (!all_finite()) {
    throw NumericError(std::string(what) + ": non-finite value");
  }
}

}  // namespace fedol
