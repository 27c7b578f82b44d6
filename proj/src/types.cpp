#include "pbens/types.hpp"

#include <string>

#include "pbens/error.hpp"

namespace pbens {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Parameter: return "parameter error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Io: return "io error";
  }
  return "error";
}

void Dataset::validate() const {
  require(inputs.rows() == labels.size(), ErrorKind::Shape,
          "dataset has " + std::to_string(inputs.rows()) + " input rows but " +
              std::to_string(labels.size()) + " labels");
  require(noise_var.size() == 0 || noise_var.size() == labels.size(), ErrorKind::Shape,
          "per-point noise variance length does not match dataset size");
}

Dataset Dataset::subset(std::span<const Index> rows) const {
  Dataset out;
  out.inputs.resize(static_cast<Index>(rows.size()), inputs.cols());
  out.labels.resize(static_cast<Index>(rows.size()));
  if (heteroscedastic()) out.noise_var.resize(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Index src = rows[r];
    require(src >= 0 && src < size(), ErrorKind::Shape, "subset row index out of range");
    const auto dst = static_cast<Index>(r);
    out.inputs.row(dst) = inputs.row(src);
    out.labels[dst] = labels[src];
    if (heteroscedastic()) out.noise_var[dst] = noise_var[src];
  }
  return out;
}

Matrix stack_rows(std::span<const Vector> rows) {
  if (rows.empty()) return {};
  Matrix out(static_cast<Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].size() == out.cols(), ErrorKind::Shape, "rows differ in length");
    out.row(static_cast<Index>(i)) = rows[i].transpose();
  }
  return out;
}

}  // namespace pbens
