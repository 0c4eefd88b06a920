#pragma once

// Plain-text model file, version-tagged:
//
//   CSVQR-MODEL 1
//   levels <M> <tau_1> ... <tau_M>
//   kernel <rbf|linear> <sigma>
//   C <value>
//   tol <value>
//   crossing_tol <value>
//   max_iter <sweeps>
//   clamp <0|1>
//   status <converged 0|1> <iterations> <max_violation> <dual_objective>
//   scaler none            | scaler <p> followed by a min row and a max row
//   support <N> <p>        followed by N rows
//   alpha_plus <M> <N>     followed by M rows
//   alpha_minus <M> <N>    followed by M rows
//   lambda <M-1> <N>       followed by M-1 rows
//   end
//
// Numbers are written with 17 significant digits so a save/load cycle is exact.

#include "csvqr/csvqr.hpp"

#include <filesystem>
#include <iosfwd>

namespace csvqr {

inline constexpr int kModelFormatVersion = 1;

void write_model(std::ostream& out, const CsvqrModel<double>& model);
CsvqrModel<double> read_model(std::istream& in);

void save_model(const std::filesystem::path& path, const CsvqrModel<double>& model);
CsvqrModel<double> load_model(const std::filesystem::path& path);

}  // namespace csvqr
